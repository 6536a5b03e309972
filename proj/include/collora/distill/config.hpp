#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "collora/effects/prompts.hpp"
#include "collora/nn/vector_field.hpp"

namespace collora {

/// Every knob of a training run. Defaults reproduce the reference protocol:
/// p_switch 0.5, noise-fraction bounds (0.50, 0.75), 5 critic updates per
/// generator update, lr 1e-4, 2000 teacher / 5000 collection / 100 extension steps.
struct TrainConfig {
  double p_switch = 0.5;
  double tau_max = 0.75;  // generator noising depth bound (u_gen < tau_max)
  double tau_min = 0.50;  // critic noising lower bound (u_c > tau_min)
  int critic_per_gen = 5;
  double lr = 1e-4;
  double critic_lr = 1e-4;
  double ema_decay = 0.995;  // 0 evaluates the raw student
  int teacher_steps = 2000;
  int collection_gen_steps = 5000;
  int extend_gen_steps = 100;
  int batch = 32;
  double lambda_tafm = 1.0;
  double lambda_ts = 1.0;
  double lambda_bs = 1.0;
  std::uint64_t seed = 0;

  // Ablation switches.
  bool asymmetric_prompts = true;
  bool ts_constraints = true;

  // Base model (stand-in for the pretrained editor).
  int base_steps = 4000;
  double base_lr = 1e-3;
  double base_target_sigma = 0.05;

  // Adapters.
  int teacher_rank = 16;
  int student_rank = 16;
  int critic_rank = 16;
  double teacher_alpha = 32.0;
  double student_alpha = 32.0;
  double critic_alpha = 32.0;

  // Architecture and prompts.
  int hidden_width = 128;
  int hidden_layers = 3;
  int trigger_dim = 16;
  int descriptor_dim = 16;

  // Data.
  int pairs_per_effect = 20;
  int general_sources = 2000;

  // Samplers.
  std::vector<double> student_schedule{1.0, 0.75, 0.5, 0.25};
  int teacher_sampler_steps = 200;

  // Noise-fraction ranges not fixed by the bounds above.
  double bs_critic_lo = 0.02;
  double bs_critic_hi = 0.98;
  double ts_gen_lo = 0.05;
  double ts_critic_hi = 0.98;

  // Logging.
  int log_every = 250;
  int checkpoint_every = 1000;
  int log_eval_sources = 128;

  void validate() const;

  NetShape net_shape() const;
  PromptDims prompt_dims() const { return {trigger_dim, descriptor_dim}; }

  nlohmann::ordered_json to_json() const;
  /// Strict: unknown keys and out-of-range values raise ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);

  /// FNV-1a of the canonical JSON dump.
  std::string hash() const;
};

/// Named ablation presets (no-aop, no-ts, no-tafm, no-pdsr, dmd-only, full).
TrainConfig apply_preset(TrainConfig cfg, const std::string& preset);
std::vector<std::string> preset_names();

}  // namespace collora
