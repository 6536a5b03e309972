#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "collora/effects/effects.hpp"
#include "collora/nn/rng.hpp"

namespace collora {

/// Source distributions.
///  - effect sources: 4-component Gaussian mixture, centres (±1,0), (0,±1), σ = 0.15
///  - general sources: isotropic N(0, 0.8² I), a broader domain than the effect data
///  - OOD sources: annulus 0.8 ≤ r ≤ 1.2 with everything inside any component's
///    3σ disc rejected (the gaps between mixture components)
namespace sources {
inline constexpr double kComponentSigma = 0.15;
inline constexpr double kGeneralSigma = 0.8;
inline constexpr double kOodInner = 0.8;
inline constexpr double kOodOuter = 1.2;

Mat mixture(Eigen::Index n, Rng& rng);
Mat general(Eigen::Index n, Rng& rng);
Mat ood(Eigen::Index n, Rng& rng);
/// Distance from x to the nearest component centre, in units of σ.
double mixture_sigma_distance(const Vec2& x);
}  // namespace sources

/// Paired (x_src, y) data. General datasets carry sources only (y has 0 rows).
struct PairDataset {
  std::string tag;  // "effect_<id>" or "general"
  std::optional<int> effect_id;
  Mat x_src;
  Mat y;

  Eigen::Index size() const { return x_src.rows(); }
  bool has_targets() const { return y.rows() == x_src.rows() && y.rows() > 0; }
};

/// y = T_i(x_src) + N(0, σ_eff² I), x_src from the mixture.
PairDataset build_effect_dataset(const EffectSpec& spec, Eigen::Index n, Rng& rng);

/// Unlabeled general-domain sources.
PairDataset build_general_dataset(Eigen::Index n, Rng& rng);

/// Reconstruction targets y = x_src + N(0, σ² I) used to train the base model.
Mat reconstruction_targets(const Mat& x_src, double sigma, Rng& rng);

/// Sample `n` rows (with replacement) from a dataset.
struct Batch {
  Mat x_src;
  Mat y;
};
Batch sample_batch(const PairDataset& data, Eigen::Index n, Rng& rng);

// NDJSON: one {"tag","effect","x_src",["y"]} object per line.
void write_dataset(const PairDataset& data, const std::filesystem::path& path);
PairDataset read_dataset(const std::filesystem::path& path);

}  // namespace collora
