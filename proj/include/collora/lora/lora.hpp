#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "collora/nn/adam.hpp"
#include "collora/nn/vector_field.hpp"

namespace collora {

/// Low-rank factors for one dense layer: delta = alpha * b * a.
struct LoraFactor {
  Mat a;  // rank x in
  Mat b;  // out x rank
};

/// Additive low-rank adapter over every weight matrix of a VectorFieldNet.
/// Biases are never adapted.
struct LoraAdapter {
  std::string name;
  int rank = 4;
  double alpha = 1.0;
  bool trainable = true;
  std::vector<LoraFactor> factors;

  /// a ~ N(0, 1/rank), b = 0, so the adapted net starts as the base function.
  static LoraAdapter create(const VectorFieldNet& base, int rank, double alpha, std::string name,
                            Rng& rng);
  static LoraAdapter zeros(const VectorFieldNet& base, int rank, double alpha, std::string name);

  Mat delta(std::size_t layer) const { return alpha * (factors[layer].b * factors[layer].a); }
  double delta_frobenius_norm() const;
  bool compatible_with(const VectorFieldNet& base) const;
  void check_compatible(const VectorFieldNet& base) const;
  bool finite() const;

  std::vector<std::span<double>> parameter_blocks();

  bool operator==(const LoraAdapter& o) const;
};

/// Gradients w.r.t. the adapter factors, laid out like `LoraAdapter::factors`.
struct AdapterGrads {
  std::vector<LoraFactor> factors;

  std::vector<std::span<const double>> blocks() const;
  bool finite() const;
};

/// Chain rule from merged-weight gradients dW to the factors:
/// dA = alpha * B^T dW, dB = alpha * dW A^T.
AdapterGrads adapter_grads(const LoraAdapter& adapter, const Gradients& merged);

/// Base net with an adapter applied: forward computes with W + alpha * B * A.
/// Holds references; the base and adapter must outlive the AdaptedNet.
class AdaptedNet {
 public:
  AdaptedNet(const VectorFieldNet& base, const LoraAdapter& adapter);

  /// Re-materialize merged weights after the adapter changed.
  void refresh();

  const VectorFieldNet& effective() const { return merged_; }
  const VectorFieldNet& base() const { return *base_; }
  const LoraAdapter& adapter() const { return *adapter_; }

  Vec2 forward(const Vec2& x_u, double u, const Vec2& x_src, const PromptEmb& c) const {
    return merged_.forward(x_u, u, x_src, c);
  }
  Mat forward(const Mat& x_u, const Vec& u, const Mat& x_src, const PromptEmb& c,
              ForwardCache* cache = nullptr) const {
    return merged_.forward(x_u, u, x_src, c, cache);
  }

 private:
  const VectorFieldNet* base_;
  const LoraAdapter* adapter_;
  VectorFieldNet merged_;
};

AdaptedNet attach(const VectorFieldNet& base, const LoraAdapter& adapter);

/// Standalone net with W <- W + alpha * B * A.
VectorFieldNet merge(const VectorFieldNet& base, const LoraAdapter& adapter);

/// Adapter whose delta is the sum of both deltas (factors stacked, alphas folded into B).
LoraAdapter concat(const LoraAdapter& first, const LoraAdapter& second, std::string name);

/// One Adam step on the adapter factors. Throws DivergenceError on non-finite grads.
void adapter_step(LoraAdapter& adapter, const AdapterGrads& grads, Adam& opt);

void save_adapter(const LoraAdapter& adapter, std::ostream& os);
void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path);
LoraAdapter load_adapter(std::istream& is);
LoraAdapter load_adapter(const std::filesystem::path& path);

}  // namespace collora
