#include "collora/nn/adam.hpp"

#include <cmath>
#include <sstream>

#include "collora/error.hpp"

namespace collora {

void Adam::step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw UsageError("parameter/gradient block count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) throw UsageError("parameter/gradient size mismatch");
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        std::ostringstream os;
        os << "non-finite gradient in block " << i << " at element " << j << " (step " << t_ + 1
           << ")";
        throw DivergenceError(os.str());
      }
    }
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw UsageError("optimizer state layout does not match parameters");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != params[i].size()) throw UsageError("optimizer moment shape mismatch");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j] + cfg_.weight_decay * params[i][j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      params[i][j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

std::vector<std::span<double>> parameter_blocks(std::vector<DenseLayer>& layers) {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::vector<std::span<const double>> gradient_blocks(const Gradients& grads) {
  std::vector<std::span<const double>> out;
  for (const auto& l : grads.layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

}  // namespace collora
