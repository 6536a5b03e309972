#include "collora/distill/pipeline.hpp"

namespace collora {

PairDataset make_general_data(const TrainConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, "general-data"));
  return build_general_dataset(cfg.general_sources, rng);
}

PairDataset make_effect_data(const TrainConfig& cfg, const EffectSpec& spec) {
  Rng rng(mix_seed(cfg.seed, "effect-data", static_cast<std::uint64_t>(spec.id)));
  return build_effect_dataset(spec, cfg.pairs_per_effect, rng);
}

VectorFieldNet make_base(const TrainConfig& cfg, const PromptBook& prompts, const PairDataset& general,
                         std::vector<LossRow>* log) {
  Rng rng(mix_seed(cfg.seed, "base"));
  const Mat y = reconstruction_targets(general.x_src, cfg.base_target_sigma, rng);
  return train_base(cfg, prompts, general.x_src, y, rng, log);
}

LoraAdapter make_teacher(const TrainConfig& cfg, const VectorFieldNet& base, const PromptBook& prompts,
                         const EffectSpec& spec, const PairDataset& data, std::vector<LossRow>* log) {
  Rng rng(mix_seed(cfg.seed, "teacher", static_cast<std::uint64_t>(spec.id)));
  return train_teacher(base, prompts.teacher(spec.id), data, cfg, "teacher_" + std::to_string(spec.id), rng,
                       log);
}

CollectionSetup prepare_collection(const TrainConfig& cfg, const std::vector<EffectSpec>& effects) {
  cfg.validate();
  const PromptBook prompts(effects, cfg.prompt_dims());
  CollectionSetup s;
  s.effects = effects;
  s.general = make_general_data(cfg);
  s.base = std::make_shared<const VectorFieldNet>(make_base(cfg, prompts, s.general));
  for (const auto& e : effects) {
    s.effect_data.push_back(make_effect_data(cfg, e));
    s.teachers.push_back(make_teacher(cfg, *s.base, prompts, e, s.effect_data.back()));
  }
  return s;
}

void extend_collection(CollectionTrainer& trainer, const EffectSpec& spec, LoraAdapter teacher,
                       PairDataset data, const StepObserver& observer) {
  const int old = trainer.effect_count();
  trainer.add_effect(spec, std::move(teacher), std::move(data));
  std::vector<double> w(static_cast<std::size_t>(old), old > 0 ? 0.5 / old : 0.0);
  w.push_back(old > 0 ? 0.5 : 1.0);
  trainer.set_effect_weights(std::move(w));
  trainer.run(trainer.config().extend_gen_steps, observer);
}

}  // namespace collora
