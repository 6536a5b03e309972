#include "collora/deploy/deploy_sim.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include "collora/error.hpp"

namespace collora {

Curve::Curve(std::map<double, double> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw ConfigError("curve needs at least one knot");
  for (const auto& [n, v] : knots_)
    if (!std::isfinite(n) || !std::isfinite(v)) throw ConfigError("curve knots must be finite");
}

double Curve::operator()(double n) const {
  if (knots_.empty()) throw ConfigError("empty curve");
  auto hi = knots_.lower_bound(n);
  if (hi == knots_.begin()) return hi->second;
  if (hi == knots_.end()) return std::prev(hi)->second;
  if (hi->first == n) return hi->second;
  auto lo = std::prev(hi);
  const double t = (n - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

Curve default_router_latency() {
  return Curve({{10, 6.88}, {20, 6.95}, {50, 7.09}, {100, 7.22}, {150, 9.18}});
}

Curve default_router_accuracy() {
  return Curve({{10, 0.99}, {20, 0.94}, {50, 0.87}, {100, 0.85}, {150, 0.76}});
}

void DeployConfig::validate() const {
  if (n_effects < 1) throw ConfigError("n_effects must be >= 1");
  if (effects_per_collection < 1) throw ConfigError("effects_per_collection must be >= 1");
  if (per_lora_storage < 0.0 || load_latency < 0.0) throw ConfigError("storage and load latency must be >= 0");
  if (trace.empty()) throw ConfigError("query trace is empty");
  for (int e : trace)
    if (e < 0 || e >= n_effects) throw ConfigError("trace id " + std::to_string(e) + " out of range");
  for (const auto& [n, v] : router_accuracy.knots())
    if (v < 0.0 || v > 1.0) throw ConfigError("router accuracy must lie in [0,1]");
  for (const auto& [n, v] : router_latency.knots())
    if (v < 0.0) throw ConfigError("router latency must be >= 0");
}

namespace {

long count_switches(const std::vector<int>& trace, int group) {
  long s = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] / group != trace[i - 1] / group) ++s;
  return s;
}

}  // namespace

CostReport simulate(const DeployConfig& cfg) {
  cfg.validate();
  CostReport r;
  r.n_effects = cfg.n_effects;
  const auto queries = static_cast<double>(cfg.trace.size());

  auto& b = r.baseline;
  b.adapters_loaded = cfg.n_effects;
  b.storage = cfg.n_effects * cfg.per_lora_storage;
  b.routing_latency_per_query = cfg.router_latency(cfg.n_effects);
  b.routing_latency = b.routing_latency_per_query * queries;
  b.switches = count_switches(cfg.trace, 1);
  b.switch_latency = static_cast<double>(b.switches) * cfg.load_latency;
  b.accuracy = cfg.router_accuracy(cfg.n_effects);

  auto& o = r.ours;
  const int collections = (cfg.n_effects + cfg.effects_per_collection - 1) / cfg.effects_per_collection;
  o.adapters_loaded = collections;
  o.storage = collections * cfg.per_lora_storage;
  o.routing_latency_per_query = collections > 1 ? cfg.router_latency(collections) : 0.0;
  o.routing_latency = o.routing_latency_per_query * queries;
  o.switches = count_switches(cfg.trace, cfg.effects_per_collection);
  o.switch_latency = static_cast<double>(o.switches) * cfg.load_latency;
  o.accuracy = collections == 1 ? 1.0 : cfg.router_accuracy(collections);
  return r;
}

std::vector<int> synth_trace(int n_effects, int length, Rng& rng) {
  if (n_effects < 1 || length < 0) throw ConfigError("bad trace parameters");
  std::vector<int> t(static_cast<std::size_t>(length));
  for (auto& e : t) e = static_cast<int>(rng.index(static_cast<std::size_t>(n_effects)));
  return t;
}

namespace {

Curve curve_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("curves are objects mapping candidate count to value");
  std::map<double, double> knots;
  for (const auto& [k, v] : j.items()) {
    std::size_t pos = 0;
    double n = 0.0;
    try {
      n = std::stod(k, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != k.size()) throw ConfigError("curve key '" + k + "' is not a number");
    knots[n] = v.get<double>();
  }
  return Curve(std::move(knots));
}

}  // namespace

DeployPlan load_deploy_plan(const nlohmann::json& j) {
  static const std::set<std::string> known{"n_effects", "effects_per_collection", "per_lora_storage",
                                           "load_latency", "router_latency", "router_accuracy",
                                           "trace_length", "seed"};
  if (!j.is_object()) throw ConfigError("deploy config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ConfigError("unknown deploy config key '" + k + "'");
  DeployPlan p;
  try {
    if (j.contains("n_effects")) {
      const auto& n = j.at("n_effects");
      p.n_effects = n.is_array() ? n.get<std::vector<int>>() : std::vector<int>{n.get<int>()};
    }
    if (j.contains("effects_per_collection")) p.base.effects_per_collection = j.at("effects_per_collection").get<int>();
    if (j.contains("per_lora_storage")) p.base.per_lora_storage = j.at("per_lora_storage").get<double>();
    if (j.contains("load_latency")) p.base.load_latency = j.at("load_latency").get<double>();
    if (j.contains("router_latency")) p.base.router_latency = curve_from_json(j.at("router_latency"));
    if (j.contains("router_accuracy")) p.base.router_accuracy = curve_from_json(j.at("router_accuracy"));
    if (j.contains("trace_length")) p.trace_length = j.at("trace_length").get<int>();
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("deploy config type error: ") + e.what());
  }
  if (p.n_effects.empty()) throw ConfigError("n_effects list is empty");
  if (p.trace_length < 1) throw ConfigError("trace_length must be >= 1");
  return p;
}

DeployPlan load_deploy_plan(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open deploy config '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("deploy config is not valid JSON: ") + e.what());
  }
  return load_deploy_plan(j);
}

std::vector<CostReport> run_plan(const DeployPlan& plan) {
  std::vector<CostReport> out;
  for (int n : plan.n_effects) {
    DeployConfig cfg = plan.base;
    cfg.n_effects = n;
    Rng rng(mix_seed(plan.seed, "trace", static_cast<std::uint64_t>(n)));
    cfg.trace = synth_trace(n, plan.trace_length, rng);
    out.push_back(simulate(cfg));
  }
  return out;
}

void write_cost_table(std::ostream& os, const std::vector<CostReport>& reports) {
  os << "metric,paradigm";
  for (const auto& r : reports) os << ',' << r.n_effects;
  os << '\n';
  auto row = [&](const char* metric, auto get) {
    for (const char* paradigm : {"baseline", "ours"}) {
      os << metric << ',' << paradigm;
      for (const auto& r : reports) {
        const ParadigmCost& c = std::string(paradigm) == "ours" ? r.ours : r.baseline;
        os << ',' << get(c);
      }
      os << '\n';
    }
  };
  row("storage", [](const ParadigmCost& c) { return c.storage; });
  row("adapters", [](const ParadigmCost& c) { return static_cast<double>(c.adapters_loaded); });
  row("routing_latency_s_per_query", [](const ParadigmCost& c) { return c.routing_latency_per_query; });
  row("routing_latency_s_total", [](const ParadigmCost& c) { return c.routing_latency; });
  row("switches", [](const ParadigmCost& c) { return static_cast<double>(c.switches); });
  row("switch_latency_s", [](const ParadigmCost& c) { return c.switch_latency; });
  row("routing_accuracy", [](const ParadigmCost& c) { return c.accuracy; });
}

}  // namespace collora
