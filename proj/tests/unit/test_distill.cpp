#include <doctest.h>

#include <sstream>

#include "../support/testing.hpp"
#include "collora/distill/config.hpp"
#include "collora/distill/losses.hpp"
#include "collora/distill/pipeline.hpp"
#include "collora/distill/trainer.hpp"
#include "collora/error.hpp"
#include "collora/nn/adam.hpp"

using namespace collora;
using namespace collora::testing;

namespace {

struct LossFixture {
  Rng rng{21};
  VectorFieldNet gen = VectorFieldNet::create(tiny_shape(), rng);
  VectorFieldNet real = VectorFieldNet::create(tiny_shape(), rng);
  VectorFieldNet fake = VectorFieldNet::create(tiny_shape(), rng);
  PromptEmb gen_prompt = tiny_prompt(1, 0.2);
  DmdNets nets{real, fake, tiny_prompt(0, 1.4), gen_prompt};
  Mat y = rng.normal_mat(6, 2);
  Mat src = rng.normal_mat(6, 2);
  Schedule schedule = Schedule::student_default();
};

// Compares the analytic gradient of `loss` with central differences, replaying
// the recorded detached values and the same random stream on every evaluation.
template <class F>
double fd_check(const VectorFieldNet& gen, F loss) {
  const Rng start(77);
  Rng r = start;
  StopGrad rec(StopGrad::Mode::Record);
  const Gradients g = loss(gen, r, rec, true);
  auto f = [&](const VectorFieldNet& n) {
    Rng rr = start;
    rec.rewind();
    return loss(n, rr, rec, false).value;
  };
  const auto fd = fd_gradient(gen, f);
  REQUIRE(norm(fd) > 0.0);
  return relative_error(flatten(g), fd);
}

struct WithGrads {
  double value;
  Gradients grads;
  operator Gradients() const { return grads; }
};

CollectionSetup tiny_setup(const TrainConfig& cfg, int n = 3) {
  auto fx = default_effects();
  fx.resize(static_cast<std::size_t>(n));
  return prepare_collection(cfg, fx);
}

bool same_adapter(const LoraAdapter& a, const LoraAdapter& b) {
  if (a.factors.size() != b.factors.size()) return false;
  for (std::size_t l = 0; l < a.factors.size(); ++l)
    if (a.factors[l].a != b.factors[l].a || a.factors[l].b != b.factors[l].b) return false;
  return true;
}

bool same_net(const VectorFieldNet& a, const VectorFieldNet& b) {
  for (std::size_t l = 0; l < a.layers().size(); ++l)
    if (a.layers()[l].weight != b.layers()[l].weight || a.layers()[l].bias != b.layers()[l].bias) return false;
  return true;
}

}  // namespace

TEST_CASE("config defaults follow the reference protocol") {
  const TrainConfig c;
  CHECK(c.p_switch == 0.5);
  CHECK(c.tau_max == 0.75);
  CHECK(c.tau_min == 0.50);
  CHECK(c.critic_per_gen == 5);
  CHECK(c.lr == 1e-4);
  CHECK(c.teacher_steps == 2000);
  CHECK(c.collection_gen_steps == 5000);
  CHECK(c.extend_gen_steps == 100);
  CHECK(c.student_schedule.size() == 4);
  CHECK(c.teacher_sampler_steps == 200);
  CHECK(c.asymmetric_prompts);
  CHECK(c.ts_constraints);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config JSON is strict and round-trips") {
  const TrainConfig c = tiny_config();
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(back.to_json() == c.to_json());

  nlohmann::json j = c.to_json();
  j["p_swich"] = 0.4;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["tau_min"] = 0.8;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["lr"] = "fast";
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["student_schedule"] = {0.9, 0.5};
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json::array()), ConfigError);
  CHECK(TrainConfig::from_json(nlohmann::json::object()).hash() == TrainConfig{}.hash());

  TrainConfig d = c;
  d.seed = 1;
  CHECK(d.hash() != c.hash());
}

TEST_CASE("ablation presets") {
  const TrainConfig c;
  CHECK_FALSE(apply_preset(c, "no-aop").asymmetric_prompts);
  CHECK(apply_preset(c, "no-ts").lambda_ts == 0.0);
  CHECK(apply_preset(c, "no-tafm").lambda_tafm == 0.0);
  CHECK(apply_preset(c, "no-pdsr").p_switch == 1.0);
  const TrainConfig d = apply_preset(c, "dmd-only");
  CHECK(d.lambda_tafm == 0.0);
  CHECK(d.lambda_ts == 0.0);
  CHECK(d.lambda_bs == 1.0);
  CHECK(apply_preset(c, "full").hash() == c.hash());
  CHECK_THROWS_AS(apply_preset(c, "no-everything"), ConfigError);
  CHECK(preset_names().size() == 6);
}

TEST_CASE("stream routing") {
  CHECK(pdsr_route(0.5, 0.5) == Stream::General);
  CHECK(pdsr_route(0.4999, 0.5) == Stream::Effect);
  CHECK(pdsr_route(0.0, 0.0) == Stream::General);
  CHECK(pdsr_route(0.9999, 1.0) == Stream::Effect);
  Rng rng(3);
  int general = 0;
  for (int i = 0; i < 100000; ++i) general += pdsr_route(rng.uniform(), 0.5) == Stream::General;
  CHECK(general / 1e5 >= 0.49);
  CHECK(general / 1e5 <= 0.51);
}

TEST_CASE("noise-fraction draws respect their open ends") {
  Rng rng(4);
  double lo_seen = 1, hi_seen = 0;
  for (int i = 0; i < 100000; ++i) {
    const double a = uniform_below(rng, 0.05, 0.75);
    REQUIRE(a >= 0.05);
    REQUIRE(a < 0.75);
    const double b = uniform_above(rng, 0.5, 0.98);
    REQUIRE(b > 0.5);
    REQUIRE(b <= 0.98);
    lo_seen = std::min(lo_seen, b);
    hi_seen = std::max(hi_seen, a);
  }
  CHECK(lo_seen < 0.501);
  CHECK(hi_seen > 0.749);
  Rng degenerate(5);
  const double hi = std::nextafter(0.3, 1.0);
  for (int i = 0; i < 100; ++i) CHECK(uniform_below(degenerate, 0.3, hi) < hi);

  const TrainConfig c;
  const TsRange r = ts_range(c);
  CHECK(r.gen_lo == 0.05);
  CHECK(r.gen_hi == 0.75);
  CHECK(r.critic_lo == 0.50);
  CHECK(r.critic_hi == 0.98);
  TrainConfig u = c;
  u.ts_constraints = false;
  const TsRange ru = ts_range(u);
  CHECK(ru.gen_hi == 0.98);
  CHECK(ru.critic_lo == 0.02);
}

TEST_CASE("dmd surrogate on constant fields") {
  const Vec2 vr(0.2, -0.1), vf(-0.3, 0.4);
  const VectorFieldNet real = constant_field(vr), fake = constant_field(vf);
  const DmdNets nets{real, fake, tiny_prompt(0, 0), tiny_prompt(1, 0)};
  Rng rng(6);
  const Mat xg = rng.normal_mat(5, 2), src = rng.normal_mat(5, 2), eps = rng.normal_mat(5, 2);
  Vec uc(5);
  for (int i = 0; i < 5; ++i) uc(i) = rng.uniform(0.1, 0.9);
  StopGrad sg;
  const DmdSurrogate s = dmd_surrogate(xg, src, nets, uc, eps, sg);
  double value = 0;
  for (int i = 0; i < 5; ++i) {
    const Vec2 g = uc(i) * (vf - vr);
    const Vec2 xt = (1 - uc(i)) * row2(xg, i) + uc(i) * row2(eps, i);
    const Vec2 x0r = xt + uc(i) * vr;
    const double w = 1.0 / ((x0r - row2(xg, i)).cwiseAbs().mean() + 1e-3);
    CHECK(s.weight(i) == doctest::Approx(w).epsilon(1e-12));
    CHECK(s.gap(i) == doctest::Approx(g.norm()).epsilon(1e-12));
    CHECK((row2(s.d_xg, i) - w * g / 5.0).norm() < 1e-12);
    value += 0.5 * w * w * g.squaredNorm() / 5.0;
  }
  CHECK(s.value == doctest::Approx(value).epsilon(1e-12));

  const DmdNets same{real, real, tiny_prompt(0, 0), tiny_prompt(0, 0)};
  const DmdSurrogate z = dmd_surrogate(xg, src, same, uc, eps, sg);
  CHECK(z.value == 0.0);
  CHECK(z.d_xg.isZero());

  // Doubling the score difference doubles the gradient; the weight only sees the real side.
  const VectorFieldNet fake2 = constant_field(vr + 2 * (vf - vr));
  const DmdSurrogate s2 = dmd_surrogate(xg, src, DmdNets{real, fake2, nets.real_prompt, nets.fake_prompt}, uc, eps, sg);
  CHECK((s2.d_xg - 2 * s.d_xg).norm() < 1e-12);
}

TEST_CASE("stop-gradient record and replay") {
  StopGrad sg(StopGrad::Mode::Record);
  const Mat a = Mat::Ones(2, 2);
  const Vec v = Vec::Ones(3);
  sg(a);
  sg(v);
  sg.rewind();
  CHECK(sg(Mat(Mat::Zero(2, 2))) == a);
  CHECK(sg(Vec(Vec::Zero(3))) == v);
  CHECK_THROWS_AS(sg(a), UsageError);
  StopGrad bad(StopGrad::Mode::Record);
  bad(a);
  bad.rewind();
  CHECK_THROWS_AS(bad(Mat(Mat::Zero(3, 2))), UsageError);
}

TEST_CASE("loss gradients match central differences") {
  LossFixture fx;
  const TrainConfig cfg;

  SUBCASE("teacher-anchored flow matching") {
    CHECK(fd_check(fx.gen, [&](const VectorFieldNet& n, Rng& r, StopGrad&, bool grad) {
            LossTerm t = loss_tafm(n, fx.y, fx.src, fx.gen_prompt, r, grad);
            return WithGrads{t.value, t.grads};
          }) <= 1e-4);
  }
  SUBCASE("target-simulation DMD") {
    CHECK(fd_check(fx.gen, [&](const VectorFieldNet& n, Rng& r, StopGrad& sg, bool grad) {
            LossTerm t = loss_dmd_ts(n, fx.gen_prompt, fx.nets, fx.y, fx.src, ts_range(cfg), r, sg, grad);
            return WithGrads{t.value, t.grads};
          }) <= 1e-4);
  }
  SUBCASE("backward-simulation DMD") {
    CHECK(fd_check(fx.gen, [&](const VectorFieldNet& n, Rng& r, StopGrad& sg, bool grad) {
            LossTerm t = loss_dmd_bs(n, fx.gen_prompt, fx.nets, fx.schedule, fx.src, 0.02, 0.98, r, sg, grad);
            return WithGrads{t.value, t.grads};
          }) <= 1e-4);
  }
  SUBCASE("weighted effect-stream composite") {
    TrainConfig c = cfg;
    c.lambda_tafm = 0.7;
    c.lambda_ts = 1.3;
    c.lambda_bs = 0.4;
    const Batch b{fx.src, fx.y};
    CHECK(fd_check(fx.gen, [&](const VectorFieldNet& n, Rng& r, StopGrad& sg, bool grad) {
            CompositeLoss l = effect_stream_loss(n, fx.gen_prompt, fx.nets, fx.schedule, b, c, r, sg, grad);
            return WithGrads{l.terms.total, l.grads};
          }) <= 1e-4);
  }
  SUBCASE("general-stream composite") {
    CHECK(fd_check(fx.gen, [&](const VectorFieldNet& n, Rng& r, StopGrad& sg, bool grad) {
            CompositeLoss l = general_stream_loss(n, fx.gen_prompt, fx.nets, fx.schedule, fx.src, cfg, r, sg, grad);
            return WithGrads{l.terms.total, l.grads};
          }) <= 1e-4);
  }
}

TEST_CASE("composite loss runs exactly the enabled terms") {
  LossFixture fx;
  const Batch b{fx.src, fx.y};
  StopGrad sg;
  Rng r(1);
  TrainConfig c;
  c.lambda_ts = 0.0;
  CompositeLoss l = effect_stream_loss(fx.gen, fx.gen_prompt, fx.nets, fx.schedule, b, c, r, sg, false);
  CHECK(l.terms.tafm);
  CHECK_FALSE(l.terms.ts);
  CHECK(l.terms.bs);
  CHECK(l.terms.total == doctest::Approx(l.terms.l_tafm + l.terms.l_bs));
  c = apply_preset(TrainConfig{}, "dmd-only");
  l = effect_stream_loss(fx.gen, fx.gen_prompt, fx.nets, fx.schedule, b, c, r, sg, false);
  CHECK_FALSE(l.terms.tafm);
  CHECK_FALSE(l.terms.ts);
  CHECK(l.terms.bs);
}

TEST_CASE("critic flow-matching loss falls as the critic fits fixed outputs") {
  Rng rng(8);
  NetShape s = tiny_shape();
  s.hidden_width = 32;
  const VectorFieldNet base = VectorFieldNet::create(s, rng);
  LoraAdapter critic = LoraAdapter::create(base, 4, 8.0, "critic", rng);
  Adam opt(AdamConfig{3e-3});
  const Mat src = rng.normal_mat(64, 2);
  const Mat xg = src * 0.5 + Mat::Constant(64, 2, 0.7);
  const PromptEmb c = tiny_prompt(1, 0.3);
  std::vector<double> window;
  double sum = 0;
  for (int k = 1; k <= 150; ++k) {
    sum += critic_update(base, critic, opt, xg, src, c, rng);
    if (k % 50 == 0) {
      window.push_back(sum / 50);
      sum = 0;
    }
  }
  REQUIRE(window.size() == 3);
  CHECK(window[1] < window[0]);
  CHECK(window[2] < window[1]);
}

TEST_CASE("teacher and base training at zero steps") {
  TrainConfig cfg = tiny_config();
  cfg.teacher_steps = 0;
  cfg.base_steps = 0;
  auto fx = default_effects();
  fx.resize(3);
  const PromptBook book(fx, cfg.prompt_dims());
  std::vector<LossRow> log;
  const PairDataset general = make_general_data(cfg);
  const VectorFieldNet base = make_base(cfg, book, general, &log);
  CHECK(log.empty());
  const PairDataset d = make_effect_data(cfg, fx[0]);
  const LoraAdapter t = make_teacher(cfg, base, book, fx[0], d, &log);
  CHECK(t.name == "teacher_0");
  CHECK_FALSE(t.trainable);
  CHECK(t.delta_frobenius_norm() == 0.0);
  CHECK(log.empty());
}

TEST_CASE("teacher loss log has one row per step") {
  TrainConfig cfg = tiny_config();
  auto fx = default_effects();
  fx.resize(3);
  const PromptBook book(fx, cfg.prompt_dims());
  const VectorFieldNet base = make_base(cfg, book, make_general_data(cfg));
  std::vector<LossRow> log;
  make_teacher(cfg, base, book, fx[1], make_effect_data(cfg, fx[1]), &log);
  REQUIRE(log.size() == 20);
  CHECK(log.front().step == 1);
  CHECK(log.back().step == 20);
  std::ostringstream os;
  write_loss_csv(os, log);
  CHECK(os.str().rfind("step,loss\n1,", 0) == 0);
}

TEST_CASE("collection trainer wiring") {
  const TrainConfig cfg = tiny_config();
  const CollectionSetup setup = tiny_setup(cfg);
  const VectorFieldNet base_copy = *setup.base;
  std::vector<VectorFieldNet> teacher_copies;
  for (const auto& t : setup.teachers) teacher_copies.push_back(merge(*setup.base, t));

  CollectionTrainer tr(setup, cfg);
  const PromptBook& book = tr.prompts();
  int general = 0, effect = 0;
  tr.run(40, [&](const StepRecord& r) {
    CHECK(r.critic_updates == cfg.critic_per_gen);
    if (r.stream == Stream::General) {
      ++general;
      CHECK(r.effect == -1);
      CHECK(r.real_is_base);
      CHECK(r.gen_prompt == book.general());
      CHECK(r.real_prompt == book.general());
      CHECK(r.terms.bs);
      CHECK_FALSE(r.terms.tafm);
      CHECK_FALSE(r.terms.ts);
    } else {
      ++effect;
      CHECK_FALSE(r.real_is_base);
      CHECK(r.gen_prompt == book.student(r.effect));
      CHECK(r.fake_prompt == book.student(r.effect));
      CHECK(r.real_prompt == book.teacher(r.effect));
      CHECK(r.terms.tafm);
      CHECK(r.terms.ts);
      CHECK(r.terms.bs);
    }
  });
  CHECK(general + effect == 40);
  CHECK(general > 0);
  CHECK(effect > 0);
  CHECK(tr.steps_done() == 40);
  CHECK(same_net(tr.base(), base_copy));
  for (int i = 0; i < 3; ++i) CHECK(same_net(tr.teacher_net(i), teacher_copies[static_cast<std::size_t>(i)]));
  CHECK_FALSE(same_adapter(tr.student(), tr.student_ema()));
  CHECK(tr.metrics().size() == 8);
  CHECK(tr.metrics()[0].general_steps + tr.metrics()[0].effect_steps == 5);
}

TEST_CASE("symmetric prompting hands the teacher prompt to every network") {
  const TrainConfig cfg = apply_preset(tiny_config(), "no-aop");
  CollectionTrainer tr(tiny_setup(cfg), cfg);
  int effect = 0;
  tr.run(20, [&](const StepRecord& r) {
    if (r.stream != Stream::Effect) return;
    ++effect;
    CHECK(r.gen_prompt == tr.prompts().teacher(r.effect));
    CHECK(r.fake_prompt == r.real_prompt);
    CHECK(r.gen_prompt == r.real_prompt);
  });
  CHECK(effect > 0);
}

TEST_CASE("no-pdsr runs only the effect stream") {
  const TrainConfig cfg = apply_preset(tiny_config(), "no-pdsr");
  CollectionTrainer tr(tiny_setup(cfg), cfg);
  tr.run(15, [](const StepRecord& r) { CHECK(r.stream == Stream::Effect); });
}

TEST_CASE("collection runs are deterministic per seed") {
  const TrainConfig cfg = tiny_config();
  const CollectionSetup setup = tiny_setup(cfg);
  CollectionTrainer a(setup, cfg), b(setup, cfg);
  a.run(10);
  b.run(10);
  CHECK(same_adapter(a.student(), b.student()));
  CHECK(same_adapter(a.critic(), b.critic()));
  std::ostringstream ma, mb;
  write_metrics_csv(ma, a.metrics());
  write_metrics_csv(mb, b.metrics());
  CHECK(ma.str() == mb.str());

  TrainConfig other = cfg;
  other.seed = 9;
  CollectionTrainer c(setup, other);
  c.run(10);
  CHECK_FALSE(same_adapter(a.student(), c.student()));
}

TEST_CASE("student EMA starts at the student and lags it") {
  TrainConfig cfg = tiny_config();
  cfg.ema_decay = 0.0;
  CollectionTrainer raw(tiny_setup(cfg), cfg);
  raw.run(5);
  CHECK(same_adapter(raw.student(), raw.student_ema()));
}

TEST_CASE("extension registers the next effect and zero steps change nothing") {
  TrainConfig cfg = tiny_config();
  cfg.extend_gen_steps = 0;
  const CollectionSetup setup = tiny_setup(cfg);
  CollectionTrainer tr(setup, cfg);
  tr.run(5);
  const LoraAdapter before = tr.student();
  EffectSpec ext = extension_effect();
  ext.id = 3;
  const PromptBook book(setup.effects, cfg.prompt_dims());
  PromptBook grown = book;
  grown.add(ext);
  const PairDataset data = make_effect_data(cfg, ext);
  const LoraAdapter teacher = make_teacher(cfg, *setup.base, grown, ext, data);
  extend_collection(tr, ext, teacher, data);
  CHECK(tr.effect_count() == 4);
  CHECK(same_adapter(tr.student(), before));
  CHECK(tr.prompts().student(3) == grown.student(3));
  CHECK(tr.prompts().student(0) == book.student(0));

  EffectSpec wrong = ext;
  wrong.id = 7;
  CHECK_THROWS_AS(tr.add_effect(wrong, teacher, data), ConfigError);
}

TEST_CASE("extension run samples the new effect about half the time") {
  TrainConfig cfg = tiny_config();
  cfg.extend_gen_steps = 200;
  cfg.critic_per_gen = 0;
  cfg.p_switch = 1.0;
  const CollectionSetup setup = tiny_setup(cfg);
  CollectionTrainer tr(setup, cfg);
  EffectSpec ext = extension_effect();
  ext.id = 3;
  const PairDataset data = make_effect_data(cfg, ext);
  int fresh = 0;
  extend_collection(tr, ext, setup.teachers[0], data, [&](const StepRecord& r) { fresh += r.effect == 3; });
  CHECK(fresh > 70);
  CHECK(fresh < 130);
}

TEST_CASE("non-finite training reports where it happened") {
  TrainConfig cfg = tiny_config();
  cfg.p_switch = 1.0;
  CollectionSetup setup = tiny_setup(cfg);
  for (auto& t : setup.teachers) t.factors[0].b(0, 0) = NAN;
  CollectionTrainer tr(setup, cfg);
  const LoraAdapter before = tr.student();
  try {
    tr.step();
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("effect") != std::string::npos);
  }
  CHECK(same_adapter(tr.student(), before));
}

TEST_CASE("trainer input validation") {
  const TrainConfig cfg = tiny_config();
  CollectionSetup setup = tiny_setup(cfg);
  CollectionSetup missing = setup;
  missing.teachers.pop_back();
  CHECK_THROWS_AS(CollectionTrainer(missing, cfg), ConfigError);
  TrainConfig wide = cfg;
  wide.trigger_dim = 6;
  CHECK_THROWS_AS(CollectionTrainer(setup, wide), ConfigError);
  CollectionTrainer tr(setup, cfg);
  CHECK_THROWS_AS(tr.set_effect_weights({1.0}), ConfigError);
  CHECK_THROWS_AS(tr.set_effect_weights({0.0, 0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(tr.teacher_net(3), ConfigError);
}

TEST_CASE("gap measurement at initialization") {
  const TrainConfig cfg = tiny_config();
  CollectionTrainer tr(tiny_setup(cfg), cfg);
  Rng rng(3);
  const GapReport g = tr.measure_gaps(0, 64, rng);
  CHECK(g.bs > 0.0);
  CHECK(g.ts > 0.0);
}
