#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collora/nn/vector_field.hpp"

namespace collora {

// Noise-fraction convention: u = 0 is clean data, u = 1 is pure noise,
// x_u = (1 - u) y + u eps, and the regressed velocity is y - eps.

/// Strictly descending noise fractions starting at 1.
class Schedule {
 public:
  explicit Schedule(std::vector<double> fractions);

  /// 4-step student schedule (1, 0.75, 0.5, 0.25).
  static Schedule student_default();
  /// K-step uniform grid 1, 1 - 1/K, ..., 1/K.
  static Schedule uniform(int steps);

  int size() const { return static_cast<int>(u_.size()); }
  double operator[](int k) const { return u_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& fractions() const { return u_; }

 private:
  std::vector<double> u_;
};

Vec2 interpolate(const Vec2& y, const Vec2& eps, double u);
Mat interpolate(const Mat& y, const Mat& eps, const Vec& u);

/// x̂0 = x_u + u v̂.
Vec2 denoise_estimate(const Vec2& x_u, double u, const Vec2& v_hat);
Mat denoise_estimate(const Mat& x_u, const Vec& u, const Mat& v_hat);

/// ‖net(x_u, u, x_src, c) − (y − eps)‖² for a single sample.
double fm_loss(const VectorFieldNet& net, const Vec2& y, const Vec2& x_src, const PromptEmb& c,
               double u, const Vec2& eps);

/// Batch-mean flow-matching loss with the output gradient needed for backward.
struct FmLoss {
  double value = 0.0;
  Mat d_out;           // d value / d net output
  ForwardCache cache;  // filled when gradients were requested
};
FmLoss fm_loss_batch(const VectorFieldNet& net, const Mat& y, const Mat& x_src, const PromptEmb& c,
                     const Vec& u, const Mat& eps, bool with_grad);

/// Uniform-grid Euler integration from u = 1 to u = 0 with `steps` evaluations.
Vec2 euler_sample(const VectorFieldNet& net, const Vec2& x_src, const PromptEmb& c, int steps,
                  Rng& rng);
Mat euler_sample(const VectorFieldNet& net, const Mat& x_src, const PromptEmb& c, int steps,
                 Rng& rng);

struct SimResult {
  Vec2 x_g;
  int stop_index = 1;       // 1-based
  std::vector<Vec2> noises;  // initial z, then one fresh eps per re-noising step
};

/// Detached batch rollout up to each row's stop index. `x_in`/`u_in` are the
/// state and noise fraction fed to the final (stop) denoise, which the caller
/// evaluates so it can be differentiated.
struct Rollout {
  Mat x_in;
  Vec u_in;
  std::vector<int> stops;  // 1-based
  std::vector<Mat> noises;  // z (B x 2), then per-step eps for the rows still running
  int evaluations = 0;      // network calls made inside the rollout
};

std::vector<int> sample_stops(int schedule_size, Eigen::Index batch, Rng& rng);

Rollout rollout(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                const PromptEmb& c, Rng& rng, std::span<const int> stops);

/// Denoise/re-noise loop from pure noise, stopped at `stop_index` (uniform in
/// [1, K] when absent). Returns x̂0 at the stop step.
SimResult backward_simulate(const VectorFieldNet& net, const Schedule& schedule,
                            const Vec2& x_src, const PromptEmb& c, Rng& rng,
                            std::optional<int> stop_index = std::nullopt);

/// Batched backward simulation returning x̂0 per row (no gradients).
Mat backward_simulate(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                      const PromptEmb& c, Rng& rng, std::span<const int> stops);

/// ŷ = denoise_estimate(interpolate(y, eps, u_gen), u_gen, net(...)).
Vec2 target_simulate(const VectorFieldNet& net, const Vec2& y, const Vec2& x_src,
                     const PromptEmb& c, double u_gen, Rng& rng);

/// Full K-step backward simulation with no gradients: the deployment sampler.
Vec2 fewstep_sample(const VectorFieldNet& net, const Schedule& schedule, const Vec2& x_src,
                    const PromptEmb& c, Rng& rng);
Mat fewstep_sample(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                   const PromptEmb& c, Rng& rng);

/// One NDJSON line per sample: {"effect","x_src","x_out","seed","nfe"}.
void write_samples_ndjson(std::ostream& os, const std::string& effect, const Mat& x_src,
                          const Mat& x_out, std::uint64_t seed, int nfe);

}  // namespace collora
