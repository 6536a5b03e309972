#pragma once

#include <span>
#include <vector>

#include "collora/nn/mlp.hpp"

namespace collora {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction. Parameters are passed as flat blocks; the
/// moment buffers mirror the block sizes seen on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Throws DivergenceError (naming the block) if any gradient is non-finite;
  /// parameters are left untouched in that case.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Flat views over every weight and bias of a layer stack (weights first per layer).
std::vector<std::span<double>> parameter_blocks(std::vector<DenseLayer>& layers);
std::vector<std::span<const double>> gradient_blocks(const Gradients& grads);

}  // namespace collora
