#include <doctest.h>

#include <sstream>

#include "collora/deploy/deploy_sim.hpp"
#include "collora/error.hpp"

using namespace collora;

namespace {

DeployConfig with_trace(int n, int k, std::vector<int> trace) {
  DeployConfig c;
  c.n_effects = n;
  c.effects_per_collection = k;
  c.trace = std::move(trace);
  return c;
}

}  // namespace

TEST_CASE("default curves pass through the reference table") {
  const Curve lat = default_router_latency(), acc = default_router_accuracy();
  CHECK(lat(10) == 6.88);
  CHECK(lat(20) == 6.95);
  CHECK(lat(50) == 7.09);
  CHECK(lat(100) == 7.22);
  CHECK(lat(150) == 9.18);
  CHECK(acc(10) == 0.99);
  CHECK(acc(20) == 0.94);
  CHECK(acc(50) == 0.87);
  CHECK(acc(100) == 0.85);
  CHECK(acc(150) == 0.76);
  CHECK(lat(2) == 6.88);
  CHECK(lat(500) == 9.18);
  CHECK(lat(125) == doctest::Approx((7.22 + 9.18) / 2));
  const DeployConfig d;
  CHECK(d.per_lora_storage == 2.2);
  CHECK(d.load_latency == 1.2);
  CHECK(d.effects_per_collection == 50);
}

TEST_CASE("structural cells") {
  Rng rng(1);
  const DeployConfig c50 = with_trace(50, 50, synth_trace(50, 200, rng));
  const CostReport r50 = simulate(c50);
  CHECK(r50.baseline.storage == doctest::Approx(2.2 * 50));
  CHECK(r50.ours.storage == doctest::Approx(2.2));
  CHECK(r50.ours.routing_latency == 0.0);
  CHECK(r50.ours.accuracy == 1.0);
  CHECK(r50.ours.switches == 0);
  CHECK(r50.baseline.routing_latency_per_query == 7.09);
  CHECK(r50.baseline.accuracy == 0.87);

  const CostReport r100 = simulate(with_trace(100, 50, synth_trace(100, 200, rng)));
  CHECK(r100.ours.storage == doctest::Approx(2.2 * 2));
  CHECK(r100.ours.adapters_loaded == 2);
  CHECK(r100.ours.routing_latency_per_query == default_router_latency()(2));
  CHECK(r100.ours.accuracy == default_router_accuracy()(2));
  CHECK(r100.ours.switch_latency == doctest::Approx(1.2 * static_cast<double>(r100.ours.switches)));
  CHECK(simulate(with_trace(150, 50, {0, 149})).ours.storage == doctest::Approx(2.2 * 3));
}

TEST_CASE("switch counting") {
  const CostReport r = simulate(with_trace(100, 50, {0, 0, 1, 49, 50, 99, 3}));
  CHECK(r.baseline.switches == 5);
  CHECK(r.ours.switches == 2);
  CHECK(simulate(with_trace(4, 1, {0, 1, 2})).ours.switches == simulate(with_trace(4, 1, {0, 1, 2})).baseline.switches);
}

TEST_CASE("dominance and monotonicity over random traces") {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng.index(200));
    const int k = 1 + static_cast<int>(rng.index(80));
    const DeployConfig c = with_trace(n, k, synth_trace(n, 1 + static_cast<int>(rng.index(300)), rng));
    const CostReport r = simulate(c);
    REQUIRE(r.ours.switches <= r.baseline.switches);
    REQUIRE(r.ours.storage <= r.baseline.storage);
    if (k > 1) REQUIRE(r.ours.storage < r.baseline.storage);
    if (n <= k) {
      REQUIRE(r.ours.routing_latency == 0.0);
      REQUIRE(r.ours.accuracy == 1.0);
      REQUIRE(r.ours.switches == 0);
    }
    DeployConfig more = c;
    more.n_effects = n + 1 + static_cast<int>(rng.index(50));
    REQUIRE(simulate(more).ours.storage >= r.ours.storage);
    DeployConfig wider = c;
    wider.effects_per_collection = k + 1 + static_cast<int>(rng.index(50));
    REQUIRE(simulate(wider).ours.storage <= r.ours.storage);
    for (const ParadigmCost* p : {&r.baseline, &r.ours}) {
      REQUIRE(p->storage >= 0);
      REQUIRE(p->routing_latency >= 0);
      REQUIRE(p->accuracy >= 0);
      REQUIRE(p->accuracy <= 1);
    }
  }
}

TEST_CASE("traces") {
  Rng a(3), b(3);
  const auto t = synth_trace(20, 200, a);
  CHECK(t.size() == 200);
  CHECK(t == synth_trace(20, 200, b));
  for (int e : t) {
    CHECK(e >= 0);
    CHECK(e < 20);
  }
}

TEST_CASE("invalid configurations") {
  CHECK_THROWS_AS(simulate(with_trace(10, 50, {})), ConfigError);
  CHECK_THROWS_AS(simulate(with_trace(10, 0, {1})), ConfigError);
  CHECK_THROWS_AS(simulate(with_trace(10, 5, {10})), ConfigError);
  DeployConfig neg = with_trace(10, 5, {1});
  neg.load_latency = -1;
  CHECK_THROWS_AS(simulate(neg), ConfigError);
  CHECK_THROWS_AS(Curve(std::map<double, double>{}), ConfigError);
}

TEST_CASE("plan loading is strict") {
  const DeployPlan d = load_deploy_plan(nlohmann::json::object());
  CHECK(d.n_effects == std::vector<int>{10, 20, 50, 100, 150});
  CHECK(d.trace_length == 200);
  const DeployPlan p = load_deploy_plan(nlohmann::json{{"n_effects", 30}, {"router_latency", {{"1", 2.0}, {"100", 4.0}}}});
  CHECK(p.n_effects == std::vector<int>{30});
  CHECK(p.base.router_latency(50.5) == doctest::Approx(3.0));
  CHECK_THROWS_AS(load_deploy_plan(nlohmann::json{{"n_effect", 30}}), ConfigError);
  CHECK_THROWS_AS(load_deploy_plan(nlohmann::json{{"router_latency", {{"many", 2.0}}}}), ConfigError);
  CHECK_THROWS_AS(load_deploy_plan(nlohmann::json{{"load_latency", "slow"}}), ConfigError);
  CHECK_THROWS_AS(load_deploy_plan(nlohmann::json{{"n_effects", nlohmann::json::array()}}), ConfigError);
}

TEST_CASE("cost table layout") {
  const auto reports = run_plan(DeployPlan{});
  REQUIRE(reports.size() == 5);
  std::ostringstream os;
  write_cost_table(os, reports);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "metric,paradigm,10,20,50,100,150");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
  }
  CHECK(rows == 14);
  CHECK(os.str().find("routing_accuracy,ours,1,1,1,") != std::string::npos);
  const auto again = run_plan(DeployPlan{});
  std::ostringstream os2;
  write_cost_table(os2, again);
  CHECK(os2.str() == os.str());
}
