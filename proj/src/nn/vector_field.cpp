#include "collora/nn/vector_field.hpp"

#include <cmath>
#include <numbers>

#include "collora/error.hpp"

namespace collora {

VectorFieldNet::VectorFieldNet(std::vector<DenseLayer> layers, Activation act, int prompt_dim)
    : layers_(std::move(layers)), activation_(act), prompt_dim_(prompt_dim) {
  validate();
}

void VectorFieldNet::validate() const {
  if (layers_.empty()) throw ConfigError("vector field needs at least one layer");
  if (prompt_dim_ < 0) throw ConfigError("negative prompt dimension");
  if (layers_.front().in_dim() != input_dim())
    throw ConfigError("first layer expects " + std::to_string(layers_.front().in_dim()) +
                      " inputs, layout needs " + std::to_string(input_dim()));
  if (layers_.back().out_dim() != kOutDim) throw ConfigError("vector field must output 2 values");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].out_dim()) throw ConfigError("bias width mismatch");
    if (i > 0 && layers_[i].in_dim() != layers_[i - 1].out_dim())
      throw ConfigError("layer " + std::to_string(i) + " is incompatible with its predecessor");
  }
}

VectorFieldNet VectorFieldNet::create(const NetShape& shape, Rng& rng) {
  if (shape.hidden_layers < 0 || shape.hidden_width <= 0) throw ConfigError("bad network shape");
  std::vector<int> dims{input_dim_for(shape.prompt_dim)};
  for (int i = 0; i < shape.hidden_layers; ++i) dims.push_back(shape.hidden_width);
  dims.push_back(kOutDim);
  return VectorFieldNet(init_layers(dims, rng), shape.activation, shape.prompt_dim);
}

Mat VectorFieldNet::assemble_inputs(const Mat& x_u, const Vec& u, const Mat& x_src,
                                    const PromptEmb& c) const {
  const Eigen::Index b = x_u.rows();
  if (x_u.cols() != 2 || x_src.cols() != 2 || x_src.rows() != b || u.size() != b)
    throw ConfigError("batch inputs have inconsistent shapes");
  if (c.dim() != prompt_dim_)
    throw ConfigError("prompt dimension " + std::to_string(c.dim()) + " does not match network (" +
                      std::to_string(prompt_dim_) + ")");
  const RowVec prompt = c.concat();
  Mat in(b, input_dim());
  for (Eigen::Index r = 0; r < b; ++r) {
    const double t = u(r);
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("noise fraction outside [0,1]");
    in(r, 0) = x_u(r, 0);
    in(r, 1) = x_u(r, 1);
    in(r, 2) = t;
    in(r, 3) = std::sin(2.0 * std::numbers::pi * t);
    in(r, 4) = std::cos(2.0 * std::numbers::pi * t);
    in(r, 5) = x_src(r, 0);
    in(r, 6) = x_src(r, 1);
    in.block(r, 7, 1, prompt_dim_) = prompt;
  }
  return in;
}

Vec2 VectorFieldNet::forward(const Vec2& x_u, double u, const Vec2& x_src,
                             const PromptEmb& c) const {
  Mat xu(1, 2), xs(1, 2);
  xu << x_u.x(), x_u.y();
  xs << x_src.x(), x_src.y();
  Vec uu(1);
  uu(0) = u;
  const Mat out = forward(xu, uu, xs, c);
  return {out(0, 0), out(0, 1)};
}

Mat VectorFieldNet::forward(const Mat& x_u, const Vec& u, const Mat& x_src, const PromptEmb& c,
                            ForwardCache* cache) const {
  return mlp_forward(layers_, activation_, assemble_inputs(x_u, u, x_src, c), cache);
}

Gradients VectorFieldNet::backward(const ForwardCache& cache, const Mat& d_out) const {
  return mlp_backward(layers_, activation_, cache, d_out);
}

}  // namespace collora
