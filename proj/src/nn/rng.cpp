#include "collora/nn/rng.hpp"

namespace collora {

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed ^ h ^ (index * 0x9e3779b97f4a7c15ULL);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::derive(std::string_view label) const { return Rng(mix_seed(seed_, label)); }

Rng Rng::derive(std::string_view label, std::uint64_t index) const {
  return Rng(mix_seed(seed_, label, index + 1));
}

double Rng::uniform() {
  ++counter_;
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  ++counter_;
  return normal_(engine_);
}

Vec2 Rng::normal2() {
  const double a = normal();
  const double b = normal();
  return {a, b};
}

std::size_t Rng::index(std::size_t n) {
  ++counter_;
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Mat Rng::normal_mat(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
  return m;
}

}  // namespace collora
