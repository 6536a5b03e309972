#pragma once

#include <vector>

#include "collora/nn/mlp.hpp"
#include "collora/prompt.hpp"

namespace collora {

struct NetShape {
  int hidden_width = 128;
  int hidden_layers = 3;
  int prompt_dim = 32;
  Activation activation = Activation::Silu;
};

/// Conditional velocity field v(x_u, u, x_src, c).
///
/// Input row layout: [x_u (2) | u, sin 2πu, cos 2πu | x_src (2) | prompt (d_p)].
/// Output: predicted velocity (2). The generator, teachers and critic all use
/// this architecture; adapters are applied by materializing merged weights.
class VectorFieldNet {
 public:
  static constexpr int kStateDim = 2;
  static constexpr int kTimeDim = 3;
  static constexpr int kSourceDim = 2;
  static constexpr int kOutDim = 2;

  VectorFieldNet() = default;
  VectorFieldNet(std::vector<DenseLayer> layers, Activation act, int prompt_dim);

  static VectorFieldNet create(const NetShape& shape, Rng& rng);
  static int input_dim_for(int prompt_dim) { return kStateDim + kTimeDim + kSourceDim + prompt_dim; }

  int prompt_dim() const { return prompt_dim_; }
  int input_dim() const { return input_dim_for(prompt_dim_); }
  Activation activation() const { return activation_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  std::size_t parameter_count() const { return collora::parameter_count(layers_); }

  Vec2 forward(const Vec2& x_u, double u, const Vec2& x_src, const PromptEmb& c) const;

  /// Batched forward: x_u and x_src are B x 2, u has B entries.
  Mat forward(const Mat& x_u, const Vec& u, const Mat& x_src, const PromptEmb& c,
              ForwardCache* cache = nullptr) const;

  Gradients backward(const ForwardCache& cache, const Mat& d_out) const;

  Mat assemble_inputs(const Mat& x_u, const Vec& u, const Mat& x_src, const PromptEmb& c) const;

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
  Activation activation_ = Activation::Silu;
  int prompt_dim_ = 0;
};

}  // namespace collora
