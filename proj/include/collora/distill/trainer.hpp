#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "collora/distill/config.hpp"
#include "collora/distill/losses.hpp"
#include "collora/effects/datasets.hpp"
#include "collora/effects/prompts.hpp"

namespace collora {

enum class Stream { General, Effect };

std::string to_string(Stream s);

/// General iff p >= p_switch.
Stream pdsr_route(double p, double p_switch);

struct LossRow {
  int step = 0;
  double loss = 0.0;
};

/// Full-parameter flow matching of the base editor on general reconstruction
/// pairs. Half of the batches use the general prompt, the rest a random
/// prompt, so the base reconstructs regardless of conditioning.
VectorFieldNet train_base(const TrainConfig& cfg, const PromptBook& prompts, const Mat& x_src,
                          const Mat& y, Rng& rng, std::vector<LossRow>* log = nullptr);

/// One teacher adapter fit by flow matching on an effect's pairs with its
/// teacher prompt.
LoraAdapter train_teacher(const VectorFieldNet& base, const PromptEmb& teacher_prompt,
                          const PairDataset& data, const TrainConfig& cfg, std::string name,
                          Rng& rng, std::vector<LossRow>* log = nullptr);

struct StepTerms {
  bool tafm = false, ts = false, bs = false;
  double l_tafm = 0.0, l_ts = 0.0, l_bs = 0.0;
  double gap_ts = 0.0, gap_bs = 0.0;  // batch-mean ‖x̂0_fake − x̂0_real‖
  double total = 0.0;
};

struct CompositeLoss {
  StepTerms terms;
  Gradients grads;  // w.r.t. the generator's effective weights; empty when no term ran
};

/// u_gen in [ts_gen_lo, tau_max), u_c in (tau_min, ts_critic_hi]; without the
/// constraints u_gen in [ts_gen_lo, ts_critic_hi) and u_c in the BS critic range.
TsRange ts_range(const TrainConfig& cfg);

/// Effect stream: λ_TAFM L_TAFM + λ_TS L_TS + λ_BS L_BS on one effect batch.
CompositeLoss effect_stream_loss(const VectorFieldNet& gen, const PromptEmb& gen_prompt,
                                 const DmdNets& nets, const Schedule& schedule, const Batch& batch,
                                 const TrainConfig& cfg, Rng& rng, StopGrad& sg, bool with_grad);

/// General stream: λ_BS L_BS against the base model.
CompositeLoss general_stream_loss(const VectorFieldNet& gen, const PromptEmb& gen_prompt,
                                  const DmdNets& nets, const Schedule& schedule, const Mat& x_src,
                                  const TrainConfig& cfg, Rng& rng, StopGrad& sg, bool with_grad);

/// What one generator step did; handed to observers.
struct StepRecord {
  int step = 0;  // 1-based
  Stream stream = Stream::General;
  int effect = -1;
  StepTerms terms;
  PromptEmb gen_prompt, real_prompt, fake_prompt;
  bool real_is_base = false;
  int critic_updates = 0;
  double critic_loss = 0.0;  // mean over this step's critic updates
};

using StepObserver = std::function<void(const StepRecord&)>;

/// One windowed metric row, written every `log_every` generator steps.
struct MetricRow {
  int step = 0;
  int general_steps = 0;
  int effect_steps = 0;
  double l_tafm = 0.0, l_ts = 0.0, l_bs = 0.0, critic = 0.0;
  std::vector<double> eval;  // filled by the trainer's eval hook, if any
};

void write_loss_csv(std::ostream& os, const std::vector<LossRow>& rows);
/// Columns step, general_steps, effect_steps, l_tafm, l_ts, l_bs, critic, sw_0..sw_{n-1}.
void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);

struct CollectionSetup {
  std::shared_ptr<const VectorFieldNet> base;
  std::vector<EffectSpec> effects;       // ids 0..N-1
  std::vector<LoraAdapter> teachers;     // one per effect, same order
  std::vector<PairDataset> effect_data;  // one per effect, same order
  PairDataset general;
};

struct GapReport {
  double bs = 0.0;
  double ts = 0.0;
};

/// Multi-teacher distillation of one student adapter with a shared critic.
class CollectionTrainer {
 public:
  CollectionTrainer(CollectionSetup setup, TrainConfig cfg);
  /// Resume from an existing student and critic (extension, checkpoints).
  CollectionTrainer(CollectionSetup setup, TrainConfig cfg, LoraAdapter student,
                    LoraAdapter critic);

  /// Registers a new effect with its teacher and data.
  void add_effect(const EffectSpec& spec, LoraAdapter teacher, PairDataset data);
  /// Effect sampling weights (normalized internally); uniform by default.
  void set_effect_weights(std::vector<double> weights);

  StepRecord step();
  void run(int gen_steps, const StepObserver& observer = {});

  int steps_done() const { return steps_; }
  int effect_count() const { return static_cast<int>(setup_.effects.size()); }
  const TrainConfig& config() const { return cfg_; }
  const PromptBook& prompts() const { return prompts_; }
  const Schedule& schedule() const { return schedule_; }
  const std::vector<EffectSpec>& effects() const { return setup_.effects; }
  const VectorFieldNet& base() const { return *setup_.base; }
  /// Raw (last-step) student adapter.
  const LoraAdapter& student() const { return student_; }
  /// Exponential moving average of the student factors; what gets evaluated
  /// and exported. Decay min(ema_decay, (1+t)/(10+t)) at step t of this trainer.
  const LoraAdapter& student_ema() const { return ema_; }
  const VectorFieldNet& ema_net() const { return ema_net_; }
  const LoraAdapter& critic() const { return critic_; }
  const VectorFieldNet& student_net() const { return student_net_; }
  const VectorFieldNet& teacher_net(int effect) const;
  const std::vector<MetricRow>& metrics() const { return metrics_; }

  /// Mean DMD gap of the current generator/critic pair on `n` samples of one
  /// effect, under backward simulation and under constrained target simulation.
  GapReport measure_gaps(int effect, int n, Rng& rng) const;

  /// Extra per-row metrics (e.g. per-effect fidelity) computed at log time.
  std::function<std::vector<double>(const CollectionTrainer&)> eval_hook;
  /// Called every `checkpoint_every` steps.
  std::function<void(const CollectionTrainer&)> checkpoint_hook;

 private:
  void init();
  int sample_effect();
  DmdNets nets_for(Stream s, int effect) const;
  void update_ema();

  CollectionSetup setup_;
  TrainConfig cfg_;
  PromptBook prompts_;
  Schedule schedule_;
  Rng rng_;
  LoraAdapter student_, critic_, ema_;
  Adam gen_opt_, critic_opt_;
  VectorFieldNet student_net_, critic_net_, ema_net_;
  std::vector<VectorFieldNet> teacher_nets_;
  std::vector<double> weights_;
  int steps_ = 0;
  std::vector<StepRecord> window_;
  std::vector<MetricRow> metrics_;
};

}  // namespace collora
