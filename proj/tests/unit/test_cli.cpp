#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "../support/testing.hpp"

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path root;
  explicit Sandbox(const std::string& name) : root(fs::temp_directory_path() / ("collora_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Sandbox() { fs::remove_all(root); }
  std::string operator/(const std::string& rel) const { return (root / rel).string(); }
};

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + COLLORA_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream is(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

void write_config(const std::string& path, nlohmann::json j) {
  std::ofstream os(path);
  os << j.dump();
}

nlohmann::json tiny_json() {
  auto j = collora::testing::tiny_config().to_json();
  return j;
}

}  // namespace

TEST_CASE("gen-data is reproducible and writes one NDJSON file per dataset") {
  Sandbox sb("gendata");
  write_config(sb / "cfg.json", tiny_json());
  REQUIRE(run("gen-data --config " + (sb / "cfg.json") + " --out " + (sb / "a") + " --seed 5") == 0);
  REQUIRE(run("gen-data --config " + (sb / "cfg.json") + " --out " + (sb / "b"), "COLLECTION_SEED=5") == 0);
  REQUIRE(run("gen-data --config " + (sb / "cfg.json") + " --out " + (sb / "c") + " --seed 6") == 0);
  int ndjson = 0;
  for (const auto& e : fs::directory_iterator(sb.root / "a")) {
    if (e.path().extension() != ".ndjson") continue;
    ++ndjson;
    const std::string name = e.path().filename().string();
    CHECK(slurp(e.path().string()) == slurp(sb / ("b/" + name)));
    CHECK(slurp(e.path().string()) != slurp(sb / ("c/" + name)));
    for (const auto& l : lines(e.path().string())) {
      const auto j = nlohmann::json::parse(l);
      REQUIRE(j.contains("tag"));
      REQUIRE(j.at("x_src").size() == 2);
      if (name == "general.ndjson") {
        CHECK(j.at("effect").is_null());
        CHECK_FALSE(j.contains("y"));
      } else {
        CHECK(j.at("y").size() == 2);
      }
    }
  }
  CHECK(ndjson == 8 + 1);
  CHECK(lines(sb / "a/effect_0.ndjson").size() == 20);
  CHECK(lines(sb / "a/general.ndjson").size() == 40);
  CHECK(fs::exists(sb / "a/manifest-gen-data.json"));
  const auto m = nlohmann::json::parse(slurp(sb / "a/manifest-gen-data.json"));
  CHECK(m.at("seed") == 5);

  REQUIRE(run("gen-data --extension --config " + (sb / "cfg.json") + " --out " + (sb / "ext")) == 0);
  CHECK(fs::exists(sb / "ext/effect_8.ndjson"));
}

TEST_CASE("usage errors exit with 2") {
  Sandbox sb("usage");
  CHECK(run("") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("train teacher --effect 0 --config " + (sb / "missing.json") + " --data " + sb.root.string() +
            " --base x --out " + (sb / "o")) == 2);
  write_config(sb / "bad.json", nlohmann::json{{"p_swich", 0.4}});
  CHECK(run("gen-data --config " + (sb / "bad.json") + " --out " + (sb / "o")) == 2);
  write_config(sb / "cfg.json", tiny_json());
  CHECK(run("gen-data --config " + (sb / "cfg.json") + " --out " + (sb / "o"), "COLLECTION_SEED=abc") == 2);
  CHECK(run("ablate --preset no-everything --data . --base x --teachers . --out " + (sb / "o")) == 2);
}

TEST_CASE("existing artifacts are protected unless forced") {
  Sandbox sb("overwrite");
  write_config(sb / "cfg.json", tiny_json());
  const std::string cmd = "gen-data --config " + (sb / "cfg.json") + " --out " + (sb / "d");
  REQUIRE(run(cmd) == 0);
  CHECK(run(cmd) == 2);
  CHECK(run(cmd + " --force") == 0);
  { std::ofstream(sb / "d/.collora.lock") << "held"; }
  CHECK(run(cmd + " --force") == 1);
  fs::remove(sb / "d/.collora.lock");
}

TEST_CASE("teacher training logs one loss row per step under the default budget") {
  Sandbox sb("teacher");
  auto j = nlohmann::json::object();
  j["base_steps"] = 20;
  j["pairs_per_effect"] = 20;
  j["general_sources"] = 64;
  write_config(sb / "cfg.json", j);
  const std::string cfg = " --config " + (sb / "cfg.json");
  REQUIRE(run("gen-data" + cfg + " --out " + (sb / "data")) == 0);
  REQUIRE(run("train base" + cfg + " --data " + (sb / "data") + " --out " + (sb / "base")) == 0);
  REQUIRE(run("train teacher --effect 2" + cfg + " --data " + (sb / "data") + " --base " + (sb / "base/base.cfn") +
              " --out " + (sb / "teachers")) == 0);
  const auto rows = lines(sb / "teachers/teacher_2.metrics.csv");
  REQUIRE(rows.size() == 2000 + 1);
  CHECK(rows.front() == "step,loss");
  CHECK(rows.back().rfind("2000,", 0) == 0);
  CHECK(fs::exists(sb / "teachers/teacher_2.cfn"));
}

TEST_CASE("end-to-end pipeline on a tiny config") {
  Sandbox sb("pipeline");
  auto j = tiny_json();
  j["collection_gen_steps"] = 10;
  j["trigger_dim"] = 10;
  j["descriptor_dim"] = 12;
  write_config(sb / "cfg.json", j);
  const std::string cfg = " --config " + (sb / "cfg.json");
  const std::string data = " --data " + (sb / "data");
  REQUIRE(run("gen-data --extension" + cfg + " --out " + (sb / "data")) == 0);
  REQUIRE(run("train base" + cfg + data + " --out " + (sb / "base")) == 0);
  const std::string base = " --base " + (sb / "base/base.cfn");
  for (int i : {0, 1, 2, 3})
    REQUIRE(run("train teacher --effect " + std::to_string(i) + cfg + data + base + " --out " + (sb / "teachers")) == 0);
  const std::string teachers = " --teachers " + (sb / "teachers");
  const std::string coll = "train collection --num-effects 3" + cfg + data + base + teachers;
  REQUIRE(run(coll + " --out " + (sb / "c1")) == 0);
  REQUIRE(run(coll + " --out " + (sb / "c2")) == 0);
  CHECK(slurp(sb / "c1/metrics.csv") == slurp(sb / "c2/metrics.csv"));
  CHECK(slurp(sb / "c1/student.cfn") == slurp(sb / "c2/student.cfn"));
  CHECK(lines(sb / "c1/metrics.csv").size() == 1 + 2);
  CHECK(fs::exists(sb / "c1/critic.cfn"));
  CHECK(fs::exists(sb / "c1/manifest-collection.json"));

  REQUIRE(run("train extend --effect 3 --from " + (sb / "c1") + cfg + data + base + teachers + " --out " +
              (sb / "ext")) == 0);
  CHECK(fs::exists(sb / "ext/student.cfn"));

  const std::string ev = " --num-effects 3" + cfg + data + base;
  REQUIRE(run("eval --student " + (sb / "c1/student.cfn") + " --suite fidelity" + ev + teachers + " --out " +
              (sb / "ev")) == 0);
  const auto report = nlohmann::json::parse(slurp(sb / "ev/report.json"));
  CHECK(report.contains("gates"));
  CHECK(fs::exists(sb / "ev/fidelity.csv"));

  CHECK(run("eval --student oracle --suite bleed --strict" + ev + " --out " + (sb / "oracle")) == 0);
  CHECK(run("eval --student random --suite bleed --strict" + ev + " --out " + (sb / "random")) == 1);
  CHECK(run("eval --student oracle --suite compose --pair 0,2 --strict" + ev + " --out " + (sb / "comp")) == 0);

  REQUIRE(run("ablate --preset no-aop --num-effects 3" + cfg + data + base + teachers + " --out " + (sb / "abl")) == 0);
  const auto abl = nlohmann::json::parse(slurp(sb / "abl/report.json"));
  CHECK(abl.at("effect_steps_with_teacher_prompt") == abl.at("effect_steps"));
}

TEST_CASE("deploy-sim writes the cost table") {
  Sandbox sb("deploy");
  REQUIRE(run("deploy-sim --out " + (sb / "d")) == 0);
  const auto rows = lines(sb / "d/costs.csv");
  REQUIRE(rows.size() == 15);
  CHECK(rows[0] == "metric,paradigm,10,20,50,100,150");
  write_config(sb / "bad.json", nlohmann::json{{"routers", 1}});
  CHECK(run("deploy-sim --config " + (sb / "bad.json")) == 2);
}
