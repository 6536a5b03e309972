#include "collora/nn/mlp.hpp"

#include <cmath>

#include "collora/error.hpp"

namespace collora {

namespace {

Mat apply_activation(Activation act, const Mat& z) {
  switch (act) {
    case Activation::Silu:
      return z.array() / (1.0 + (-z.array()).exp());
    case Activation::Tanh:
      return z.array().tanh();
    case Activation::Identity:
      return z;
  }
  return z;
}

Mat activation_derivative(Activation act, const Mat& z) {
  switch (act) {
    case Activation::Silu: {
      const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
      return sig * (1.0 + z.array() * (1.0 - sig));
    }
    case Activation::Tanh: {
      const Eigen::ArrayXXd t = z.array().tanh();
      return 1.0 - t * t;
    }
    case Activation::Identity:
      return Mat::Ones(z.rows(), z.cols());
  }
  return Mat::Ones(z.rows(), z.cols());
}

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Silu:
      return "silu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "silu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::Silu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw FormatError("unknown activation '" + name + "'");
}

Gradients Gradients::zeros_like(std::span<const DenseLayer> layers) {
  Gradients g;
  g.layers.reserve(layers.size());
  for (const auto& l : layers)
    g.layers.push_back({Mat::Zero(l.out_dim(), l.in_dim()), RowVec::Zero(l.out_dim())});
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (layers.empty()) {
    *this = other;
    return *this;
  }
  if (other.layers.size() != layers.size()) throw UsageError("gradient layout mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

bool Gradients::finite() const {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

Mat mlp_forward(std::span<const DenseLayer> layers, Activation act, const Mat& x,
                ForwardCache* cache) {
  if (layers.empty()) throw ConfigError("network has no layers");
  if (x.cols() != layers.front().in_dim())
    throw ConfigError("input width " + std::to_string(x.cols()) + " does not match network input " +
                      std::to_string(layers.front().in_dim()));
  if (cache) cache->clear();
  Mat h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    Mat z = h * layer.weight.transpose();
    z.rowwise() += layer.bias;
    if (cache) cache->inputs.push_back(std::move(h));
    if (i + 1 == layers.size()) return z;
    h = apply_activation(act, z);
    if (cache) cache->preacts.push_back(std::move(z));
  }
  return h;
}

Gradients mlp_backward(std::span<const DenseLayer> layers, Activation act,
                       const ForwardCache& cache, const Mat& d_out) {
  if (cache.empty()) throw UsageError("backward called before a recorded forward pass");
  if (cache.inputs.size() != layers.size() || cache.preacts.size() + 1 != layers.size())
    throw UsageError("forward cache does not belong to this network");
  if (d_out.rows() != cache.inputs.front().rows() || d_out.cols() != layers.back().out_dim())
    throw UsageError("output gradient shape mismatch");

  Gradients grads;
  grads.layers.resize(layers.size());
  Mat delta = d_out;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& layer = layers[k];
    grads.layers[k].weight = delta.transpose() * cache.inputs[k];
    grads.layers[k].bias = delta.colwise().sum();
    Mat d_in = delta * layer.weight;
    if (k == 0) {
      grads.input = std::move(d_in);
    } else {
      delta = d_in.cwiseProduct(activation_derivative(act, cache.preacts[k - 1]));
    }
  }
  return grads;
}

std::vector<DenseLayer> init_layers(std::span<const int> dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("need at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw ConfigError("layer widths must be positive");
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    DenseLayer l{rng.normal_mat(dims[i + 1], dims[i]) * scale, RowVec::Zero(dims[i + 1])};
    layers.push_back(std::move(l));
  }
  return layers;
}

std::size_t parameter_count(std::span<const DenseLayer> layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

}  // namespace collora
