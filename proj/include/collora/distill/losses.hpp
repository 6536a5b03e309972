#pragma once

#include <deque>

#include "collora/flow/flowmatch.hpp"
#include "collora/lora/lora.hpp"

namespace collora {

/// Gate for every detached quantity in the generator losses.
///
/// Pass: values flow through unchanged. Record: values flow through and are
/// stored in order. Replay: the stored values are returned in the same order,
/// so a perturbed evaluation of a loss treats its detached parts as constants.
/// Finite-difference checks of stop-gradient objectives depend on this.
class StopGrad {
 public:
  enum class Mode { Pass, Record, Replay };

  StopGrad() = default;
  explicit StopGrad(Mode mode) : mode_(mode) {}

  Mode mode() const { return mode_; }
  const Mat& operator()(const Mat& value);
  const Vec& operator()(const Vec& value);
  /// Switch a recorder to replay from the first stored value.
  void rewind();

 private:
  Mode mode_ = Mode::Pass;
  std::deque<Mat> mats_;
  std::deque<Vec> vecs_;
  std::size_t mat_pos_ = 0;
  std::size_t vec_pos_ = 0;
};

/// One generator loss term: value plus gradient w.r.t. the generator's
/// effective (merged) weights.
struct LossTerm {
  double value = 0.0;
  Gradients grads;
  /// Per-row ‖x̂0_fake − x̂0_real‖ of the DMD terms; empty for flow matching.
  Vec gap;
};

/// Pieces of the distribution-matching surrogate for a batch of generator
/// outputs x_g (detached):
///   x_t = interpolate(x_g, eps, u_c); g = x̂0_fake − x̂0_real
///   w = 1 / (mean |x̂0_real − x_g| + 1e-3) per row
///   value = ½ ‖x_g − sg(x_g − w g)‖² averaged over rows
struct DmdSurrogate {
  double value = 0.0;
  Mat d_xg;  // d value / d x_g
  Vec gap;
  Vec weight;
};

struct DmdNets {
  const VectorFieldNet& real;  // teacher-adapted base, or the base itself
  const VectorFieldNet& fake;  // critic-adapted base
  PromptEmb real_prompt;
  PromptEmb fake_prompt;
};

DmdSurrogate dmd_surrogate(const Mat& x_g, const Mat& x_src, const DmdNets& nets, const Vec& u_c,
                           const Mat& eps, StopGrad& sg);

inline constexpr double kDmdWeightEps = 1e-3;

/// Noise-fraction sampling ranges for a target-simulation term.
struct TsRange {
  double gen_lo, gen_hi;        // u_gen in [gen_lo, gen_hi)
  double critic_lo, critic_hi;  // u_c in (critic_lo, critic_hi]
};

/// Uniform draws with the boundary excluded on the side the bounds forbid.
double uniform_below(Rng& rng, double lo, double hi);  // [lo, hi)
double uniform_above(Rng& rng, double lo, double hi);  // (lo, hi]

/// Teacher-anchored flow matching on paired data with the generator prompt.
LossTerm loss_tafm(const VectorFieldNet& gen, const Mat& y, const Mat& x_src, const PromptEmb& c,
                   Rng& rng, bool with_grad);

/// DMD on target-simulated generator outputs (data noised to u_gen, one denoise).
LossTerm loss_dmd_ts(const VectorFieldNet& gen, const PromptEmb& gen_prompt, const DmdNets& nets,
                     const Mat& y, const Mat& x_src, const TsRange& range, Rng& rng,
                     StopGrad& sg, bool with_grad);

/// DMD on backward-simulated generator outputs (rollout from pure noise).
LossTerm loss_dmd_bs(const VectorFieldNet& gen, const PromptEmb& gen_prompt, const DmdNets& nets,
                     const Schedule& schedule, const Mat& x_src, double critic_lo,
                     double critic_hi, Rng& rng, StopGrad& sg, bool with_grad);

/// Fake-score update: flow matching on detached generator outputs with the
/// generator prompt. Returns the pre-update loss.
double critic_update(const VectorFieldNet& base, LoraAdapter& critic, Adam& opt, const Mat& x_g,
                     const Mat& x_src, const PromptEmb& c, Rng& rng);

}  // namespace collora
