#pragma once

#include <vector>

#include "collora/distill/trainer.hpp"

namespace collora {

// Seeded construction of everything a collection run consumes. Every piece
// draws from its own stream derived from cfg.seed, so building one piece never
// shifts the randomness of another.

PairDataset make_general_data(const TrainConfig& cfg);
PairDataset make_effect_data(const TrainConfig& cfg, const EffectSpec& spec);

VectorFieldNet make_base(const TrainConfig& cfg, const PromptBook& prompts, const PairDataset& general,
                         std::vector<LossRow>* log = nullptr);

LoraAdapter make_teacher(const TrainConfig& cfg, const VectorFieldNet& base, const PromptBook& prompts,
                         const EffectSpec& spec, const PairDataset& data,
                         std::vector<LossRow>* log = nullptr);

/// Data, base and one teacher per effect.
CollectionSetup prepare_collection(const TrainConfig& cfg, const std::vector<EffectSpec>& effects);

/// Registers the new effect, samples it at weight 0.5 and every old effect at
/// 0.5/N, and runs `extend_gen_steps` generator steps.
void extend_collection(CollectionTrainer& trainer, const EffectSpec& spec, LoraAdapter teacher,
                       PairDataset data, const StepObserver& observer = {});

}  // namespace collora
