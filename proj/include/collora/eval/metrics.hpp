#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "collora/effects/effects.hpp"
#include "collora/effects/prompts.hpp"
#include "collora/flow/flowmatch.hpp"

namespace collora {

/// What a student is asked to do: the prompt it sees, plus the effect ids the
/// prompt stands for (used only by oracle students).
struct EvalQuery {
  PromptEmb prompt;
  std::vector<int> effects;
};

/// Maps a batch of sources to outputs for one query.
struct Student {
  std::function<Mat(const Mat& sources, const EvalQuery& q, Rng& rng)> generate;
  int nfe = 0;
  std::string label;
};

Student fewstep_student(const VectorFieldNet& net, Schedule schedule);
/// Teachers, one per effect, sampled with the teacher prompt and `steps` Euler steps.
Student teacher_student(const std::vector<const VectorFieldNet*>& teachers, const PromptBook& prompts,
                        int steps);
/// Applies the queried transforms exactly (in order), no noise.
Student oracle_student(std::vector<EffectSpec> effects);
/// Applies a uniformly random effect's transform to each source.
Student random_student(std::vector<EffectSpec> effects);

EvalQuery single_query(const PromptBook& prompts, int effect);
EvalQuery compose_query(const PromptBook& prompts, int a, int b);

/// Mean over random unit directions of the exact 1-D W2 between projections.
/// Requires equally sized sets with the same dimension.
double sliced_wasserstein(const Mat& a, const Mat& b, int projections, Rng& rng);

/// Rows [x_src | x] as one 4-D point set, so distances see the per-source pairing.
Mat joint(const Mat& x_src, const Mat& x);

/// T_i(x_src) + N(0, σ_eff²): a draw from the exact conditional target distribution.
Mat oracle_samples(const EffectSpec& spec, const Mat& x_src, Rng& rng);

/// Joint-space SW between (x_src, student output) and (x_src, oracle sample).
double effect_sw(const Student& s, const EffectSpec& spec, const EvalQuery& q, const Mat& sources,
                 Rng& rng, int projections = 128);

struct BleedMatrix {
  Mat m;  // N x N: m(i, j) = mean ‖x_out(prompt i) − T_j(x_src)‖
  /// Per row: fraction of samples whose nearest oracle target is T_i.
  std::vector<double> trigger_rate;
  double correct_trigger_rate() const;  // mean over rows
};

BleedMatrix bleed_matrix(const Student& s, const std::vector<EffectSpec>& effects,
                         const PromptBook& prompts, const Mat& sources, Rng& rng);

/// Fraction of outputs farther than ρ from T_i(x_src).
double bcr_analog(const Student& s, const EffectSpec& spec, const EvalQuery& q, const Mat& sources,
                  double rho, Rng& rng);
inline double default_rho(const EffectSpec& spec) { return 3.0 * spec.sigma_eff; }

/// bcr_analog on out-of-support sources.
double ood_eval(const Student& s, const EffectSpec& spec, const EvalQuery& q,
                const Mat& annulus_sources, Rng& rng);

struct CompositionScore {
  double composed = 0.0;  // mean ‖x_out − T_b(T_a(x_src))‖
  double to_a = 0.0;      // mean ‖x_out − T_a(x_src)‖
  double to_b = 0.0;
  bool closer_to_composed() const { return composed < std::min(to_a, to_b); }
};

CompositionScore composition_score(const Student& s, const EffectSpec& a, const EffectSpec& b,
                                   const PromptBook& prompts, const Mat& sources, Rng& rng);

/// Mean over sources of the per-source output variance (trace of the 2x2
/// covariance over `draws` independent samples per source).
double within_source_variance(const Student& s, const EvalQuery& q, const Mat& sources, int draws,
                              Rng& rng);

struct EffectRow {
  int effect = 0;
  std::string kind;
  double sw = 0.0;
  double trigger_rate = 0.0;
  double bcr = 0.0;
  double ood_sw = 0.0;
  double ood_bcr = 0.0;
};

struct CompositionRow {
  int a = 0, b = 0;
  CompositionScore score;
};

struct EvalReport {
  std::string student;
  int nfe = 0;
  std::vector<EffectRow> effects;
  double correct_trigger_rate = 0.0;
  std::vector<CompositionRow> compositions;
  BleedMatrix bleed;

  double mean_bcr() const;
  double mean_ood_bcr() const;
  nlohmann::ordered_json to_json() const;
  void write_csv(std::ostream& os) const;
  void write_bleed_csv(std::ostream& os) const;
};

struct EvalSizes {
  int in_distribution = 1000;
  int ood = 500;
  int projections = 128;
};

/// Every metric for every effect, plus the given composition pairs.
EvalReport evaluate(const Student& s, const std::vector<EffectSpec>& effects, const PromptBook& prompts,
                    const std::vector<std::pair<int, int>>& compositions, std::uint64_t seed,
                    const EvalSizes& sizes = {});

}  // namespace collora
