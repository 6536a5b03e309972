#pragma once

#include <span>
#include <string>
#include <vector>

#include "collora/nn/rng.hpp"
#include "collora/nn/tensor.hpp"

namespace collora {

enum class Activation { Silu, Tanh, Identity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// y = x W^T + b, with W stored out x in.
struct DenseLayer {
  Mat weight;
  RowVec bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Activations recorded by a forward pass, consumed by `mlp_backward`.
struct ForwardCache {
  std::vector<Mat> inputs;   // input to each layer
  std::vector<Mat> preacts;  // pre-activation of each hidden layer

  bool empty() const { return inputs.empty(); }
  void clear() {
    inputs.clear();
    preacts.clear();
  }
};

struct LayerGrads {
  Mat weight;
  RowVec bias;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  Mat input;  // d loss / d network input

  static Gradients zeros_like(std::span<const DenseLayer> layers);
  Gradients& operator+=(const Gradients& other);
  double squared_norm() const;
  bool finite() const;
};

/// Hidden layers apply `act`; the final layer is affine.
Mat mlp_forward(std::span<const DenseLayer> layers, Activation act, const Mat& x,
                ForwardCache* cache = nullptr);

/// Exact reverse-mode pass for d_out = dL/d(output). Throws UsageError when the
/// cache holds no recorded forward pass.
Gradients mlp_backward(std::span<const DenseLayer> layers, Activation act,
                       const ForwardCache& cache, const Mat& d_out);

/// Scaled-normal init: W ~ N(0, 1/in), b = 0.
std::vector<DenseLayer> init_layers(std::span<const int> dims, Rng& rng);

std::size_t parameter_count(std::span<const DenseLayer> layers);

}  // namespace collora
