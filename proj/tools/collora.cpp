#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "collora/deploy/deploy_sim.hpp"
#include "collora/distill/pipeline.hpp"
#include "collora/error.hpp"
#include "collora/eval/metrics.hpp"
#include "collora/lora/lora.hpp"
#include "collora/nn/model_io.hpp"
#include "run_dir.hpp"

namespace fs = std::filesystem;
using namespace collora;
using cli::OutputDir;
using cli::UsageFailure;

namespace {

std::string g_command;  // argv joined, for manifests

struct Common {
  std::string out;
  bool force = false;
  std::vector<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  auto* o = app->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
  app->add_flag("--force", c.force, "overwrite existing artifacts");
  app->add_option("--seed", c.seed, "random seed (default: COLLECTION_SEED, then the config)")->expected(1);
}

TrainConfig load_config(const std::string& path, const Common& c) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfig::load(path);
  cfg.seed = cli::resolve_seed(c.seed, cfg.seed);
  cfg.validate();
  return cfg;
}

std::vector<EffectSpec> load_effects(const std::string& data_dir, int count) {
  auto effects = load_registry(fs::path(data_dir) / "registry.json");
  if (count >= 0) {
    if (count < 1 || count > static_cast<int>(effects.size()))
      throw UsageFailure("--num-effects must lie in [1, " + std::to_string(effects.size()) + "]");
    effects.resize(static_cast<std::size_t>(count));
  }
  return effects;
}

fs::path effect_file(const std::string& data_dir, int id) {
  return fs::path(data_dir) / ("effect_" + std::to_string(id) + ".ndjson");
}

fs::path teacher_file(const std::string& dir, int id) {
  return fs::path(dir) / ("teacher_" + std::to_string(id) + ".cfn");
}

nlohmann::ordered_json manifest_head(const std::string& label, const TrainConfig* cfg, std::uint64_t seed) {
  nlohmann::ordered_json m;
  m["label"] = label;
  m["command"] = g_command;
  m["seed"] = seed;
  if (cfg) {
    m["config_hash"] = cfg->hash();
    m["config"] = cfg->to_json();
  }
  return m;
}

template <class F>
void write_file(const fs::path& p, F&& body) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  body(os);
  if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
}

CollectionSetup load_setup(const TrainConfig& cfg, const std::vector<EffectSpec>& effects,
                           const std::string& data_dir, const std::string& base_path,
                           const std::string& teachers_dir) {
  CollectionSetup s;
  s.effects = effects;
  s.base = std::make_shared<const VectorFieldNet>(load_model(fs::path(base_path)));
  if (s.base->prompt_dim() != cfg.prompt_dims().total())
    throw UsageFailure("base model prompt width does not match the config");
  s.general = read_dataset(fs::path(data_dir) / "general.ndjson");
  for (const auto& e : effects) {
    s.effect_data.push_back(read_dataset(effect_file(data_dir, e.id)));
    const fs::path tf = teacher_file(teachers_dir, e.id);
    if (!fs::exists(tf)) throw UsageFailure("missing teacher '" + tf.string() + "'");
    s.teachers.push_back(load_adapter(tf));
  }
  return s;
}

void attach_logging(CollectionTrainer& tr) {
  Rng src_rng(mix_seed(tr.config().seed, "log-eval-sources"));
  const Mat sources = sources::mixture(tr.config().log_eval_sources, src_rng);
  tr.eval_hook = [sources](const CollectionTrainer& t) {
    Rng rng(mix_seed(t.config().seed, "log-eval", static_cast<std::uint64_t>(t.steps_done())));
    const Student s = fewstep_student(t.ema_net(), t.schedule());
    std::vector<double> sw;
    for (const auto& e : t.effects())
      sw.push_back(effect_sw(s, e, single_query(t.prompts(), e.id), sources, rng, 64));
    return sw;
  };
}

void log_progress(const std::string& tag, const CollectionTrainer& tr, int total) {
  if (tr.metrics().empty()) return;
  const auto& r = tr.metrics().back();
  double mean_sw = 0.0;
  for (double v : r.eval) mean_sw += v;
  if (!r.eval.empty()) mean_sw /= static_cast<double>(r.eval.size());
  std::cerr << "[" << tag << "] step " << r.step << "/" << total << "  tafm " << r.l_tafm << "  ts " << r.l_ts
            << "  bs " << r.l_bs << "  critic " << r.critic << "  mean sw " << mean_sw << "\n";
}

void run_logged(CollectionTrainer& tr, int steps, const std::string& tag, const StepObserver& observer = {}) {
  std::size_t seen = tr.metrics().size();
  const int total = tr.steps_done() + steps;
  tr.run(steps, [&](const StepRecord& rec) {
    if (observer) observer(rec);
    if (tr.metrics().size() != seen) {
      seen = tr.metrics().size();
      log_progress(tag, tr, total);
    }
  });
  // The observer fires before the row of its own step is appended.
  if (tr.metrics().size() != seen) log_progress(tag, tr, total);
}

// ---- gen-data ----

struct GenDataArgs {
  Common c;
  std::string effects, config;
  bool extension = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  auto effects = a.effects.empty() ? default_effects() : load_registry(a.effects);
  if (a.extension) {
    EffectSpec e = extension_effect();
    e.id = static_cast<int>(effects.size());
    effects.push_back(e);
  }
  std::vector<std::string> planned{"registry.json", "general.ndjson"};
  for (const auto& e : effects) planned.push_back("effect_" + std::to_string(e.id) + ".ndjson");
  OutputDir out(a.c.out, "gen-data", a.c.force, planned);
  save_registry(effects, out.artifact("registry.json"));
  write_dataset(make_general_data(cfg), out.artifact("general.ndjson"));
  for (const auto& e : effects)
    write_dataset(make_effect_data(cfg, e), out.artifact("effect_" + std::to_string(e.id) + ".ndjson"));
  auto m = manifest_head("gen-data", &cfg, cfg.seed);
  m["effects"] = effects.size();
  out.finish(m);
  std::cerr << "wrote " << effects.size() + 1 << " datasets to " << a.c.out << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  Common c;
  std::string config, data, base, teachers, from;
  int effect = -1;
  int num_effects = -1;
};

int cmd_train_base(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  const auto effects = load_effects(a.data, -1);
  OutputDir out(a.c.out, "base", a.c.force, {"base.cfn", "base.metrics.csv"});
  const PromptBook prompts(effects, cfg.prompt_dims());
  const PairDataset general = read_dataset(fs::path(a.data) / "general.ndjson");
  std::vector<LossRow> log;
  std::cerr << "[base] " << cfg.base_steps << " steps on " << general.size() << " general sources\n";
  const VectorFieldNet base = make_base(cfg, prompts, general, &log);
  save_model(base, out.artifact("base.cfn"));
  write_file(out.artifact("base.metrics.csv"), [&](std::ostream& os) { write_loss_csv(os, log); });
  out.finish(manifest_head("base", &cfg, cfg.seed));
  return 0;
}

int cmd_train_teacher(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  const auto effects = load_effects(a.data, -1);
  if (a.effect < 0 || a.effect >= static_cast<int>(effects.size()))
    throw UsageFailure("--effect " + std::to_string(a.effect) + " is not in the registry");
  const std::string stem = "teacher_" + std::to_string(a.effect);
  OutputDir out(a.c.out, stem, a.c.force, {stem + ".cfn", stem + ".metrics.csv"});
  const VectorFieldNet base = load_model(fs::path(a.base));
  const PromptBook prompts(effects, cfg.prompt_dims());
  const auto& spec = effects[static_cast<std::size_t>(a.effect)];
  const PairDataset data = read_dataset(effect_file(a.data, a.effect));
  std::vector<LossRow> log;
  std::cerr << "[" << stem << "] " << kind_name(spec.transform) << ", " << cfg.teacher_steps << " steps on "
            << data.size() << " pairs\n";
  const LoraAdapter t = make_teacher(cfg, base, prompts, spec, data, &log);
  save_adapter(t, out.artifact(stem + ".cfn"));
  write_file(out.artifact(stem + ".metrics.csv"), [&](std::ostream& os) { write_loss_csv(os, log); });
  auto m = manifest_head(stem, &cfg, cfg.seed);
  m["effect"] = a.effect;
  out.finish(m);
  return 0;
}

void save_trainer(const CollectionTrainer& tr, OutputDir& out, const std::string& prefix) {
  save_adapter(tr.student_ema(), out.artifact(prefix + "student.cfn"));
  save_adapter(tr.student(), out.artifact(prefix + "student_raw.cfn"));
  save_adapter(tr.critic(), out.artifact(prefix + "critic.cfn"));
}

int cmd_train_collection(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  const auto effects = load_effects(a.data, a.num_effects);
  OutputDir out(a.c.out, "collection", a.c.force,
                {"student.cfn", "student_raw.cfn", "critic.cfn", "metrics.csv", "checkpoints"});
  CollectionTrainer tr(load_setup(cfg, effects, a.data, a.base, a.teachers), cfg);
  attach_logging(tr);
  tr.checkpoint_hook = [&out](const CollectionTrainer& t) {
    save_trainer(t, out, "checkpoints/step_" + std::to_string(t.steps_done()) + "/");
  };
  std::cerr << "[collection] " << effects.size() << " effects, " << cfg.collection_gen_steps
            << " generator steps\n";
  run_logged(tr, cfg.collection_gen_steps, "collection");
  save_trainer(tr, out, "");
  write_file(out.artifact("metrics.csv"), [&](std::ostream& os) { write_metrics_csv(os, tr.metrics()); });
  auto m = manifest_head("collection", &cfg, cfg.seed);
  m["effects"] = effects.size();
  m["steps"] = tr.steps_done();
  out.finish(m);
  return 0;
}

int cmd_train_extend(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  const auto all = load_effects(a.data, -1);
  if (a.effect < 1 || a.effect >= static_cast<int>(all.size()))
    throw UsageFailure("--effect must name a registry entry after the trained effects");
  const std::vector<EffectSpec> old(all.begin(), all.begin() + a.effect);
  const auto& spec = all[static_cast<std::size_t>(a.effect)];
  const std::string label = "extend_" + std::to_string(a.effect);
  OutputDir out(a.c.out, label, a.c.force, {"student.cfn", "student_raw.cfn", "critic.cfn", "metrics.csv"});
  CollectionSetup setup = load_setup(cfg, old, a.data, a.base, a.teachers);
  const fs::path tf = teacher_file(a.teachers, a.effect);
  if (!fs::exists(tf)) throw UsageFailure("missing teacher '" + tf.string() + "'");
  LoraAdapter student = load_adapter(fs::path(a.from) / "student.cfn");
  LoraAdapter critic = load_adapter(fs::path(a.from) / "critic.cfn");
  CollectionTrainer tr(std::move(setup), cfg, std::move(student), std::move(critic));
  attach_logging(tr);
  std::cerr << "[" << label << "] " << kind_name(spec.transform) << ", " << cfg.extend_gen_steps
            << " generator steps\n";
  extend_collection(tr, spec, load_adapter(tf), read_dataset(effect_file(a.data, a.effect)));
  log_progress(label, tr, cfg.extend_gen_steps);
  save_trainer(tr, out, "");
  write_file(out.artifact("metrics.csv"), [&](std::ostream& os) { write_metrics_csv(os, tr.metrics()); });
  auto m = manifest_head(label, &cfg, cfg.seed);
  m["effects"] = all.size() > 0 ? a.effect + 1 : 0;
  m["from"] = a.from;
  out.finish(m);
  return 0;
}

// ---- eval ----

struct EvalArgs {
  Common c;
  std::string student, suite, config, data, base, teachers;
  int num_effects = -1;
  std::vector<std::string> pairs;
  bool strict = false;
};

std::vector<std::pair<int, int>> parse_pairs(const std::vector<std::string>& raw, int n) {
  std::vector<std::pair<int, int>> out;
  for (const auto& s : raw) {
    const auto comma = s.find(',');
    int a = -1, b = -1;
    try {
      if (comma == std::string::npos) throw std::invalid_argument(s);
      std::size_t pa = 0, pb = 0;
      a = std::stoi(s.substr(0, comma), &pa);
      b = std::stoi(s.substr(comma + 1), &pb);
      if (pa != comma || pb != s.size() - comma - 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageFailure("--pair expects 'a,b', got '" + s + "'");
    }
    if (a < 0 || b < 0 || a >= n || b >= n) throw UsageFailure("--pair '" + s + "' names an unknown effect");
    out.emplace_back(a, b);
  }
  return out;
}

struct Gate {
  std::string name;
  double value, threshold;
  bool pass;
};

int cmd_eval(const EvalArgs& a) {
  TrainConfig cfg = load_config(a.config, a.c);
  const std::uint64_t seed = cfg.seed;
  const auto effects = a.data.empty() ? default_effects() : load_effects(a.data, a.num_effects);
  if (a.data.empty() && a.num_effects >= 0) throw UsageFailure("--num-effects needs --data");
  const PromptBook prompts(effects, cfg.prompt_dims());
  const int n = static_cast<int>(effects.size());
  auto pairs = parse_pairs(a.pairs, n);
  if (pairs.empty() && n > 3) pairs.emplace_back(0, 3);

  std::vector<std::string> planned{"report.json", a.suite + ".csv"};
  OutputDir out(a.c.out, "eval_" + a.suite, a.c.force, planned);

  std::shared_ptr<VectorFieldNet> base, net;
  Student student;
  if (a.student == "oracle") {
    student = oracle_student(effects);
  } else if (a.student == "random") {
    student = random_student(effects);
  } else {
    if (a.base.empty()) throw UsageFailure("evaluating an adapter needs --base");
    base = std::make_shared<VectorFieldNet>(load_model(fs::path(a.base)));
    net = std::make_shared<VectorFieldNet>(merge(*base, load_adapter(fs::path(a.student))));
    student = fewstep_student(*net, Schedule(cfg.student_schedule));
    student.label = a.student;
  }
  std::cerr << "[eval] " << student.label << " on " << n << " effects, suite " << a.suite << "\n";
  const EvalReport rep = evaluate(student, effects, prompts, pairs, seed);

  std::vector<double> teacher_sw;
  std::vector<VectorFieldNet> teacher_nets;
  if (!a.teachers.empty()) {
    if (!base) {
      if (a.base.empty()) throw UsageFailure("--teachers needs --base");
      base = std::make_shared<VectorFieldNet>(load_model(fs::path(a.base)));
    }
    for (const auto& e : effects) teacher_nets.push_back(merge(*base, load_adapter(teacher_file(a.teachers, e.id))));
    std::vector<const VectorFieldNet*> ptrs;
    for (const auto& t : teacher_nets) ptrs.push_back(&t);
    const EvalReport trep = evaluate(teacher_student(ptrs, prompts, cfg.teacher_sampler_steps), effects, prompts, {}, seed);
    for (const auto& r : trep.effects) teacher_sw.push_back(r.sw);
  }

  std::vector<Gate> gates;
  if (a.suite == "bleed") gates.push_back({"correct_trigger_rate", rep.correct_trigger_rate, 0.95, rep.correct_trigger_rate >= 0.95});
  if (a.suite == "bcr") gates.push_back({"mean_bcr", rep.mean_bcr(), 0.10, rep.mean_bcr() <= 0.10});
  if (a.suite == "compose")
    for (const auto& c : rep.compositions)
      gates.push_back({"compose_" + std::to_string(c.a) + "_" + std::to_string(c.b), c.score.composed,
                       std::min(c.score.to_a, c.score.to_b), c.score.closer_to_composed()});
  if (a.suite == "fidelity" && !teacher_sw.empty())
    for (std::size_t i = 0; i < teacher_sw.size(); ++i)
      gates.push_back({"sw_ratio_" + std::to_string(i), rep.effects[i].sw, 1.5 * teacher_sw[i],
                       rep.effects[i].sw <= 1.5 * teacher_sw[i]});

  write_file(out.artifact(a.suite + ".csv"), [&](std::ostream& os) {
    if (a.suite == "fidelity") {
      os << "effect,kind,sw" << (teacher_sw.empty() ? "" : ",teacher_sw,ratio") << ",nfe\n";
      for (std::size_t i = 0; i < rep.effects.size(); ++i) {
        const auto& r = rep.effects[i];
        os << r.effect << ',' << r.kind << ',' << r.sw;
        if (!teacher_sw.empty()) os << ',' << teacher_sw[i] << ',' << r.sw / teacher_sw[i];
        os << ',' << rep.nfe << '\n';
      }
    } else if (a.suite == "bleed") {
      rep.write_bleed_csv(os);
    } else if (a.suite == "bcr") {
      os << "effect,kind,bcr,trigger_rate\n";
      for (const auto& r : rep.effects) os << r.effect << ',' << r.kind << ',' << r.bcr << ',' << r.trigger_rate << '\n';
    } else if (a.suite == "ood") {
      os << "effect,kind,ood_sw,ood_bcr,bcr\n";
      for (const auto& r : rep.effects) os << r.effect << ',' << r.kind << ',' << r.ood_sw << ',' << r.ood_bcr << ',' << r.bcr << '\n';
    } else {
      os << "a,b,composed,to_a,to_b,closer_to_composed\n";
      for (const auto& c : rep.compositions)
        os << c.a << ',' << c.b << ',' << c.score.composed << ',' << c.score.to_a << ',' << c.score.to_b << ','
           << c.score.closer_to_composed() << '\n';
    }
  });

  auto j = rep.to_json();
  j["suite"] = a.suite;
  if (!teacher_sw.empty()) j["teacher_sw"] = teacher_sw;
  bool all_pass = true;
  auto& gj = j["gates"] = nlohmann::ordered_json::array();
  for (const auto& g : gates) {
    gj.push_back({{"name", g.name}, {"value", g.value}, {"threshold", g.threshold}, {"pass", g.pass}});
    all_pass = all_pass && g.pass;
    std::cerr << "  gate " << g.name << ": " << g.value << " vs " << g.threshold << (g.pass ? "  pass" : "  FAIL")
              << "\n";
  }
  write_file(out.artifact("report.json"), [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  auto m = manifest_head("eval_" + a.suite, &cfg, seed);
  m["student"] = a.student;
  m["gates_pass"] = all_pass;
  out.finish(m);
  return a.strict && !all_pass ? 1 : 0;
}

// ---- deploy-sim ----

struct DeployArgs {
  Common c;
  std::string config;
};

int cmd_deploy(const DeployArgs& a) {
  DeployPlan plan = a.config.empty() ? DeployPlan{} : load_deploy_plan(fs::path(a.config));
  plan.seed = cli::resolve_seed(a.c.seed, plan.seed);
  const auto reports = run_plan(plan);
  if (a.c.out.empty()) {
    write_cost_table(std::cout, reports);
    return 0;
  }
  OutputDir out(a.c.out, "deploy", a.c.force, {"costs.csv"});
  write_file(out.artifact("costs.csv"), [&](std::ostream& os) { write_cost_table(os, reports); });
  auto m = manifest_head("deploy", nullptr, plan.seed);
  m["n_effects"] = plan.n_effects;
  out.finish(m);
  return 0;
}

// ---- ablate ----

struct AblateArgs {
  TrainArgs t;
  std::string preset;
};

int cmd_ablate(const AblateArgs& a) {
  TrainConfig cfg = apply_preset(load_config(a.t.config, a.t.c), a.preset);
  const auto effects = load_effects(a.t.data, a.t.num_effects);
  const std::string label = "ablate_" + a.preset;
  OutputDir out(a.t.c.out, label, a.t.c.force, {"student.cfn", "metrics.csv", "report.json"});
  CollectionTrainer tr(load_setup(cfg, effects, a.t.data, a.t.base, a.t.teachers), cfg);
  attach_logging(tr);

  // Instrumentation: with asymmetric prompts off, every effect step must condition
  // the generator exactly like its teacher.
  long effect_steps = 0, equal_prompts = 0;
  const StepObserver check = [&](const StepRecord& r) {
    if (r.stream != Stream::Effect) return;
    ++effect_steps;
    if (r.gen_prompt == r.real_prompt) ++equal_prompts;
    if (!cfg.asymmetric_prompts && !(r.gen_prompt == r.real_prompt))
      throw std::runtime_error("no-aop run used a student prompt at step " + std::to_string(r.step));
  };
  std::cerr << "[" << label << "] " << effects.size() << " effects, " << cfg.collection_gen_steps << " generator steps\n";
  run_logged(tr, cfg.collection_gen_steps, label, check);

  save_adapter(tr.student_ema(), out.artifact("student.cfn"));
  write_file(out.artifact("metrics.csv"), [&](std::ostream& os) { write_metrics_csv(os, tr.metrics()); });
  std::vector<std::pair<int, int>> pairs;
  if (effects.size() > 3) pairs.emplace_back(0, 3);
  const EvalReport rep =
      evaluate(fewstep_student(tr.ema_net(), tr.schedule()), effects, tr.prompts(), pairs, cfg.seed);
  auto j = rep.to_json();
  j["preset"] = a.preset;
  j["effect_steps"] = effect_steps;
  j["effect_steps_with_teacher_prompt"] = equal_prompts;
  write_file(out.artifact("report.json"), [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  std::cerr << "  correct trigger rate " << rep.correct_trigger_rate << ", mean bcr " << rep.mean_bcr()
            << ", mean ood bcr " << rep.mean_ood_bcr() << "\n";
  auto m = manifest_head(label, &cfg, cfg.seed);
  m["preset"] = a.preset;
  out.finish(m);
  return 0;
}

void add_train_inputs(CLI::App* app, TrainArgs& t, bool needs_base, bool needs_teachers) {
  app->add_option("--config", t.config, "run config JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--data", t.data, "directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  if (needs_base) app->add_option("--base", t.base, "base model file")->required()->check(CLI::ExistingFile);
  if (needs_teachers)
    app->add_option("--teachers", t.teachers, "directory holding teacher_<i>.cfn")
        ->required()
        ->check(CLI::ExistingDirectory);
  add_common(app, t.c);
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Multi-effect adapter distillation for conditional flow-matching generators"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "write effect and general datasets plus the effect registry");
  gen->add_option("--effects", gd.effects, "effect registry JSON (default: the 8 built-in effects)")
      ->check(CLI::ExistingFile);
  gen->add_flag("--extension", gd.extension, "append the built-in extension effect (rotation 180)");
  gen->add_option("--config", gd.config, "run config JSON (dataset sizes)")->check(CLI::ExistingFile);
  add_common(gen, gd.c);

  auto* train = app.add_subcommand("train", "train the base, a teacher, the collection, or an extension");
  train->require_subcommand(1);
  TrainArgs tb, tt, tc, te;
  add_train_inputs(train->add_subcommand("base", "full-parameter flow matching of the base model"), tb, false, false);
  auto* teacher = train->add_subcommand("teacher", "fit one effect teacher adapter");
  teacher->add_option("--effect", tt.effect, "effect id")->required();
  add_train_inputs(teacher, tt, true, false);
  auto* coll = train->add_subcommand("collection", "distill all teachers into one student adapter");
  coll->add_option("--num-effects", tc.num_effects, "use the first N registry effects");
  add_train_inputs(coll, tc, true, true);
  auto* ext = train->add_subcommand("extend", "add one effect to a trained collection");
  ext->add_option("--effect", te.effect, "id of the new effect (effects below it are the old ones)")->required();
  ext->add_option("--from", te.from, "collection output holding student.cfn and critic.cfn")
      ->required()
      ->check(CLI::ExistingDirectory);
  add_train_inputs(ext, te, true, true);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a student");
  eval->add_option("--student", ea.student, "adapter file, 'oracle' or 'random'")->required();
  eval->add_option("--suite", ea.suite, "fidelity|bleed|bcr|ood|compose")
      ->required()
      ->check(CLI::IsMember({"fidelity", "bleed", "bcr", "ood", "compose"}));
  eval->add_option("--config", ea.config, "run config JSON")->check(CLI::ExistingFile);
  eval->add_option("--data", ea.data, "gen-data directory (for the registry)")->check(CLI::ExistingDirectory);
  eval->add_option("--base", ea.base, "base model file")->check(CLI::ExistingFile);
  eval->add_option("--teachers", ea.teachers, "teacher directory, adds teacher SW to fidelity")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--num-effects", ea.num_effects, "use the first N registry effects");
  eval->add_option("--pair", ea.pairs, "composition pair 'a,b' (repeatable; default 0,3)");
  eval->add_flag("--strict", ea.strict, "exit 1 when a gate fails");
  add_common(eval, ea.c);

  DeployArgs da;
  auto* deploy = app.add_subcommand("deploy-sim", "deployment cost table");
  deploy->add_option("--config", da.config, "deploy config JSON")->check(CLI::ExistingFile);
  add_common(deploy, da.c, false);

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate one ablation preset");
  ablate->add_option("--preset", aa.preset, "preset name")->required()->check(CLI::IsMember(preset_names()));
  ablate->add_option("--num-effects", aa.t.num_effects, "use the first N registry effects");
  ablate->add_option("--config", aa.t.config, "run config JSON")->check(CLI::ExistingFile);
  ablate->add_option("--data", aa.t.data, "gen-data directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--base", aa.t.base, "base model file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--teachers", aa.t.teachers, "teacher directory")->required()->check(CLI::ExistingDirectory);
  add_common(ablate, aa.t.c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd);
    if (train->got_subcommand("base")) return cmd_train_base(tb);
    if (train->got_subcommand("teacher")) return cmd_train_teacher(tt);
    if (train->got_subcommand("collection")) return cmd_train_collection(tc);
    if (train->got_subcommand("extend")) return cmd_train_extend(te);
    if (eval->parsed()) return cmd_eval(ea);
    if (deploy->parsed()) return cmd_deploy(da);
    if (ablate->parsed()) return cmd_ablate(aa);
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
