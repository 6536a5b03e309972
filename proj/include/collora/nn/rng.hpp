#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "collora/nn/tensor.hpp"

namespace collora {

/// Seeded random stream. Identical seeds give identical streams; `derive`
/// produces an independent stream keyed by a label without consuming draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return counter_; }

  Rng derive(std::string_view label) const;
  Rng derive(std::string_view label, std::uint64_t index) const;

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  Vec2 normal2();
  std::size_t index(std::size_t n);  // uniform in [0, n)

  /// B x cols matrix of standard normals.
  Mat normal_mat(Eigen::Index rows, Eigen::Index cols);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stable 64-bit mixing of a seed with a label (FNV-1a + splitmix finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

}  // namespace collora
