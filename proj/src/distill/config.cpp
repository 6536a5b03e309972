#include "collora/distill/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "collora/error.hpp"
#include "collora/flow/flowmatch.hpp"

namespace collora {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(p_switch >= 0.0 && p_switch <= 1.0, "p_switch must lie in [0,1]");
  require(tau_min > 0.0 && tau_min < tau_max && tau_max < 1.0,
          "timestep bounds must satisfy 0 < tau_min < tau_max < 1");
  require(critic_per_gen >= 0, "critic_per_gen must be >= 0");
  require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must lie in [0, 1)");
  require(lr > 0.0 && critic_lr > 0.0 && base_lr > 0.0, "learning rates must be positive");
  require(teacher_steps >= 0 && collection_gen_steps >= 0 && extend_gen_steps >= 0 &&
              base_steps >= 0,
          "step counts must be >= 0");
  require(batch >= 1, "batch must be >= 1");
  require(lambda_tafm >= 0.0 && lambda_ts >= 0.0 && lambda_bs >= 0.0,
          "loss weights must be non-negative");
  require(teacher_rank >= 1 && student_rank >= 1 && critic_rank >= 1, "ranks must be >= 1");
  require(teacher_alpha > 0.0 && student_alpha > 0.0 && critic_alpha > 0.0, "adapter scales must be positive");
  require(hidden_width >= 1 && hidden_layers >= 0, "bad network shape");
  require(trigger_dim >= 1 && descriptor_dim >= 1, "prompt blocks must be non-empty");
  require(pairs_per_effect >= 1 && general_sources >= 1, "datasets must be non-empty");
  require(teacher_sampler_steps >= 1, "teacher sampler needs at least one step");
  require(0.0 <= bs_critic_lo && bs_critic_lo < bs_critic_hi && bs_critic_hi <= 1.0,
          "bad backward-simulation critic range");
  require(0.0 <= ts_gen_lo && ts_gen_lo < tau_max, "ts_gen_lo must lie below tau_max");
  require(tau_min < ts_critic_hi && ts_critic_hi <= 1.0, "ts_critic_hi must exceed tau_min");
  require(log_every >= 1 && checkpoint_every >= 1 && log_eval_sources >= 1,
          "logging intervals must be positive");
  require(base_target_sigma >= 0.0, "base_target_sigma must be >= 0");
  Schedule check(student_schedule);
  (void)check;
}

NetShape TrainConfig::net_shape() const {
  return {hidden_width, hidden_layers, trigger_dim + descriptor_dim, Activation::Silu};
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["p_switch"] = p_switch;
  j["tau_max"] = tau_max;
  j["tau_min"] = tau_min;
  j["critic_per_gen"] = critic_per_gen;
  j["lr"] = lr;
  j["critic_lr"] = critic_lr;
  j["ema_decay"] = ema_decay;
  j["teacher_steps"] = teacher_steps;
  j["collection_gen_steps"] = collection_gen_steps;
  j["extend_gen_steps"] = extend_gen_steps;
  j["batch"] = batch;
  j["lambda_tafm"] = lambda_tafm;
  j["lambda_ts"] = lambda_ts;
  j["lambda_bs"] = lambda_bs;
  j["seed"] = seed;
  j["asymmetric_prompts"] = asymmetric_prompts;
  j["ts_constraints"] = ts_constraints;
  j["base_steps"] = base_steps;
  j["base_lr"] = base_lr;
  j["base_target_sigma"] = base_target_sigma;
  j["teacher_rank"] = teacher_rank;
  j["student_rank"] = student_rank;
  j["critic_rank"] = critic_rank;
  j["teacher_alpha"] = teacher_alpha;
  j["student_alpha"] = student_alpha;
  j["critic_alpha"] = critic_alpha;
  j["hidden_width"] = hidden_width;
  j["hidden_layers"] = hidden_layers;
  j["trigger_dim"] = trigger_dim;
  j["descriptor_dim"] = descriptor_dim;
  j["pairs_per_effect"] = pairs_per_effect;
  j["general_sources"] = general_sources;
  j["student_schedule"] = student_schedule;
  j["teacher_sampler_steps"] = teacher_sampler_steps;
  j["bs_critic_lo"] = bs_critic_lo;
  j["bs_critic_hi"] = bs_critic_hi;
  j["ts_gen_lo"] = ts_gen_lo;
  j["ts_critic_hi"] = ts_critic_hi;
  j["log_every"] = log_every;
  j["checkpoint_every"] = checkpoint_every;
  j["log_eval_sources"] = log_eval_sources;
  return j;
}

namespace {

template <class T>
void read_into(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  const auto known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    read_into(j, "p_switch", c.p_switch);
    read_into(j, "tau_max", c.tau_max);
    read_into(j, "tau_min", c.tau_min);
    read_into(j, "critic_per_gen", c.critic_per_gen);
    read_into(j, "lr", c.lr);
    read_into(j, "critic_lr", c.critic_lr);
    read_into(j, "ema_decay", c.ema_decay);
    read_into(j, "teacher_steps", c.teacher_steps);
    read_into(j, "collection_gen_steps", c.collection_gen_steps);
    read_into(j, "extend_gen_steps", c.extend_gen_steps);
    read_into(j, "batch", c.batch);
    read_into(j, "lambda_tafm", c.lambda_tafm);
    read_into(j, "lambda_ts", c.lambda_ts);
    read_into(j, "lambda_bs", c.lambda_bs);
    read_into(j, "seed", c.seed);
    read_into(j, "asymmetric_prompts", c.asymmetric_prompts);
    read_into(j, "ts_constraints", c.ts_constraints);
    read_into(j, "base_steps", c.base_steps);
    read_into(j, "base_lr", c.base_lr);
    read_into(j, "base_target_sigma", c.base_target_sigma);
    read_into(j, "teacher_rank", c.teacher_rank);
    read_into(j, "student_rank", c.student_rank);
    read_into(j, "critic_rank", c.critic_rank);
    read_into(j, "teacher_alpha", c.teacher_alpha);
    read_into(j, "student_alpha", c.student_alpha);
    read_into(j, "critic_alpha", c.critic_alpha);
    read_into(j, "hidden_width", c.hidden_width);
    read_into(j, "hidden_layers", c.hidden_layers);
    read_into(j, "trigger_dim", c.trigger_dim);
    read_into(j, "descriptor_dim", c.descriptor_dim);
    read_into(j, "pairs_per_effect", c.pairs_per_effect);
    read_into(j, "general_sources", c.general_sources);
    read_into(j, "student_schedule", c.student_schedule);
    read_into(j, "teacher_sampler_steps", c.teacher_sampler_steps);
    read_into(j, "bs_critic_lo", c.bs_critic_lo);
    read_into(j, "bs_critic_hi", c.bs_critic_hi);
    read_into(j, "ts_gen_lo", c.ts_gen_lo);
    read_into(j, "ts_critic_hi", c.ts_critic_hi);
    read_into(j, "log_every", c.log_every);
    read_into(j, "checkpoint_every", c.checkpoint_every);
    read_into(j, "log_eval_sources", c.log_eval_sources);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

std::string TrainConfig::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> preset_names() {
  return {"full", "no-aop", "no-ts", "no-tafm", "no-pdsr", "dmd-only"};
}

TrainConfig apply_preset(TrainConfig cfg, const std::string& preset) {
  if (preset == "full") {
  } else if (preset == "no-aop") {
    cfg.asymmetric_prompts = false;
  } else if (preset == "no-ts") {
    cfg.lambda_ts = 0.0;
  } else if (preset == "no-tafm") {
    cfg.lambda_tafm = 0.0;
  } else if (preset == "no-pdsr") {
    cfg.p_switch = 1.0;
  } else if (preset == "dmd-only") {
    cfg.lambda_tafm = 0.0;
    cfg.lambda_ts = 0.0;
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace collora
