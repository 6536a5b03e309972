#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

#include <json.hpp>

#include "collora/nn/rng.hpp"

namespace collora {

/// Piecewise-linear curve through (n, value) knots, clamped outside the knots.
class Curve {
 public:
  Curve() = default;
  explicit Curve(std::map<double, double> knots);
  double operator()(double n) const;
  const std::map<double, double>& knots() const { return knots_; }

 private:
  std::map<double, double> knots_;
};

/// Router latency (s/query) and accuracy by candidate count, from the
/// reference deployment table.
Curve default_router_latency();
Curve default_router_accuracy();

struct DeployConfig {
  int n_effects = 50;
  int effects_per_collection = 50;
  double per_lora_storage = 2.2;  // storage units per adapter
  double load_latency = 1.2;      // seconds per adapter switch
  Curve router_latency = default_router_latency();
  Curve router_accuracy = default_router_accuracy();
  std::vector<int> trace;

  void validate() const;
};

struct ParadigmCost {
  double storage = 0.0;
  double routing_latency = 0.0;  // total over the trace
  double routing_latency_per_query = 0.0;
  long switches = 0;
  double switch_latency = 0.0;  // switches * load_latency
  double accuracy = 0.0;
  int adapters_loaded = 0;      // distinct adapters (or collections) in the deployment
};

struct CostReport {
  int n_effects = 0;
  ParadigmCost baseline;
  ParadigmCost ours;
};

CostReport simulate(const DeployConfig& cfg);

/// Uniform i.i.d. effect ids in [0, n_effects).
std::vector<int> synth_trace(int n_effects, int length, Rng& rng);

/// Config JSON: {"n_effects": int | [ints], "effects_per_collection", "per_lora_storage",
/// "load_latency", "router_latency": {n: s}, "router_accuracy": {n: acc},
/// "trace_length", "seed"}. Unknown keys raise ConfigError.
struct DeployPlan {
  std::vector<int> n_effects{10, 20, 50, 100, 150};
  DeployConfig base;
  int trace_length = 200;
  std::uint64_t seed = 0;
};

DeployPlan load_deploy_plan(const nlohmann::json& j);
DeployPlan load_deploy_plan(const std::filesystem::path& path);
std::vector<CostReport> run_plan(const DeployPlan& plan);

/// Rows = metric × paradigm, columns = effect counts.
void write_cost_table(std::ostream& os, const std::vector<CostReport>& reports);

}  // namespace collora
