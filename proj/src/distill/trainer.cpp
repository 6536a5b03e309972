#include "collora/distill/trainer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <algorithm>

#include "collora/error.hpp"

namespace collora {

std::string to_string(Stream s) { return s == Stream::General ? "general" : "effect"; }

Stream pdsr_route(double p, double p_switch) {
  return p >= p_switch ? Stream::General : Stream::Effect;
}

namespace {

AdamConfig adam_with_lr(double lr) {
  AdamConfig c;
  c.lr = lr;
  return c;
}

PromptEmb random_prompt(const PromptDims& dims, Rng& rng) {
  Vec trig = Vec::Zero(dims.trigger);
  if (rng.uniform() < 0.5) trig(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(dims.trigger)))) = 1.0;
  Vec desc(dims.descriptor);
  for (Eigen::Index i = 0; i < desc.size(); ++i) desc(i) = rng.normal();
  desc.normalize();
  return {trig, desc};
}

void scale(Gradients& g, double s) {
  for (auto& l : g.layers) {
    l.weight *= s;
    l.bias *= s;
  }
}

void accumulate(CompositeLoss& out, LossTerm term, double lambda, bool with_grad) {
  out.terms.total += lambda * term.value;
  if (with_grad) {
    scale(term.grads, lambda);
    out.grads += term.grads;
  }
}

}  // namespace

VectorFieldNet train_base(const TrainConfig& cfg, const PromptBook& prompts, const Mat& x_src,
                          const Mat& y, Rng& rng, std::vector<LossRow>* log) {
  if (x_src.rows() == 0 || x_src.rows() != y.rows()) throw ConfigError("base training needs paired data");
  VectorFieldNet net = VectorFieldNet::create(cfg.net_shape(), rng);
  Adam opt(adam_with_lr(cfg.base_lr));
  PairDataset data{"general", std::nullopt, x_src, y};
  for (int step = 1; step <= cfg.base_steps; ++step) {
    const Batch b = sample_batch(data, cfg.batch, rng);
    const PromptEmb c = rng.uniform() < 0.5 ? prompts.general() : random_prompt(prompts.dims(), rng);
    LossTerm t = loss_tafm(net, b.y, b.x_src, c, rng, true);
    if (!std::isfinite(t.value)) throw DivergenceError("base loss diverged at step " + std::to_string(step));
    opt.step(parameter_blocks(net.mutable_layers()), gradient_blocks(t.grads));
    if (log) log->push_back({step, t.value});
  }
  return net;
}

LoraAdapter train_teacher(const VectorFieldNet& base, const PromptEmb& teacher_prompt,
                          const PairDataset& data, const TrainConfig& cfg, std::string name,
                          Rng& rng, std::vector<LossRow>* log) {
  if (!data.has_targets()) throw ConfigError("teacher data '" + data.tag + "' has no targets");
  LoraAdapter ad = LoraAdapter::create(base, cfg.teacher_rank, cfg.teacher_alpha, std::move(name), rng);
  Adam opt(adam_with_lr(cfg.lr));
  for (int step = 1; step <= cfg.teacher_steps; ++step) {
    const VectorFieldNet net = merge(base, ad);
    const Batch b = sample_batch(data, cfg.batch, rng);
    LossTerm t = loss_tafm(net, b.y, b.x_src, teacher_prompt, rng, true);
    if (!std::isfinite(t.value))
      throw DivergenceError("teacher '" + ad.name + "' diverged at step " + std::to_string(step));
    adapter_step(ad, adapter_grads(ad, t.grads), opt);
    if (log) log->push_back({step, t.value});
  }
  ad.trainable = false;
  return ad;
}

TsRange ts_range(const TrainConfig& cfg) {
  if (!cfg.ts_constraints) return {cfg.ts_gen_lo, cfg.ts_critic_hi, cfg.bs_critic_lo, cfg.bs_critic_hi};
  return {cfg.ts_gen_lo, cfg.tau_max, cfg.tau_min, cfg.ts_critic_hi};
}

CompositeLoss effect_stream_loss(const VectorFieldNet& gen, const PromptEmb& gen_prompt,
                                 const DmdNets& nets, const Schedule& schedule, const Batch& batch,
                                 const TrainConfig& cfg, Rng& rng, StopGrad& sg, bool with_grad) {
  CompositeLoss out;
  if (cfg.lambda_tafm > 0.0) {
    LossTerm t = loss_tafm(gen, batch.y, batch.x_src, gen_prompt, rng, with_grad);
    out.terms.tafm = true;
    out.terms.l_tafm = t.value;
    accumulate(out, std::move(t), cfg.lambda_tafm, with_grad);
  }
  if (cfg.lambda_ts > 0.0) {
    LossTerm t = loss_dmd_ts(gen, gen_prompt, nets, batch.y, batch.x_src, ts_range(cfg), rng, sg, with_grad);
    out.terms.ts = true;
    out.terms.l_ts = t.value;
    out.terms.gap_ts = t.gap.mean();
    accumulate(out, std::move(t), cfg.lambda_ts, with_grad);
  }
  if (cfg.lambda_bs > 0.0) {
    LossTerm t = loss_dmd_bs(gen, gen_prompt, nets, schedule, batch.x_src, cfg.bs_critic_lo,
                             cfg.bs_critic_hi, rng, sg, with_grad);
    out.terms.bs = true;
    out.terms.l_bs = t.value;
    out.terms.gap_bs = t.gap.mean();
    accumulate(out, std::move(t), cfg.lambda_bs, with_grad);
  }
  return out;
}

CompositeLoss general_stream_loss(const VectorFieldNet& gen, const PromptEmb& gen_prompt,
                                  const DmdNets& nets, const Schedule& schedule, const Mat& x_src,
                                  const TrainConfig& cfg, Rng& rng, StopGrad& sg, bool with_grad) {
  CompositeLoss out;
  if (cfg.lambda_bs > 0.0) {
    LossTerm t = loss_dmd_bs(gen, gen_prompt, nets, schedule, x_src, cfg.bs_critic_lo,
                             cfg.bs_critic_hi, rng, sg, with_grad);
    out.terms.bs = true;
    out.terms.l_bs = t.value;
    out.terms.gap_bs = t.gap.mean();
    accumulate(out, std::move(t), cfg.lambda_bs, with_grad);
  }
  return out;
}

CollectionTrainer::CollectionTrainer(CollectionSetup setup, TrainConfig cfg)
    : setup_(std::move(setup)),
      cfg_(std::move(cfg)),
      prompts_(setup_.effects, cfg_.prompt_dims()),
      schedule_(cfg_.student_schedule),
      rng_(mix_seed(cfg_.seed, "collection")),
      gen_opt_(adam_with_lr(cfg_.lr)),
      critic_opt_(adam_with_lr(cfg_.critic_lr)) {
  if (!setup_.base) throw ConfigError("collection training needs a base model");
  Rng init_rng = rng_.derive("init");
  student_ = LoraAdapter::create(*setup_.base, cfg_.student_rank, cfg_.student_alpha, "student", init_rng);
  critic_ = LoraAdapter::create(*setup_.base, cfg_.critic_rank, cfg_.critic_alpha, "critic", init_rng);
  init();
}

CollectionTrainer::CollectionTrainer(CollectionSetup setup, TrainConfig cfg, LoraAdapter student,
                                     LoraAdapter critic)
    : setup_(std::move(setup)),
      cfg_(std::move(cfg)),
      prompts_(setup_.effects, cfg_.prompt_dims()),
      schedule_(cfg_.student_schedule),
      rng_(mix_seed(cfg_.seed, "collection-resume")),
      student_(std::move(student)),
      critic_(std::move(critic)),
      gen_opt_(adam_with_lr(cfg_.lr)),
      critic_opt_(adam_with_lr(cfg_.critic_lr)) {
  if (!setup_.base) throw ConfigError("collection training needs a base model");
  student_.trainable = true;
  critic_.trainable = true;
  init();
}

void CollectionTrainer::init() {
  cfg_.validate();
  const auto n = setup_.effects.size();
  if (setup_.teachers.size() != n || setup_.effect_data.size() != n)
    throw ConfigError("need exactly one teacher and one dataset per effect");
  if (setup_.base->prompt_dim() != cfg_.prompt_dims().total())
    throw ConfigError("base prompt width does not match the configured prompt blocks");
  student_.check_compatible(*setup_.base);
  critic_.check_compatible(*setup_.base);
  if (setup_.general.size() == 0 && cfg_.p_switch < 1.0)
    throw ConfigError("general stream enabled but the general dataset is empty");
  teacher_nets_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (setup_.effects[i].id != static_cast<int>(i)) throw ConfigError("effect ids must be 0..N-1");
    if (!setup_.effect_data[i].has_targets())
      throw ConfigError("effect " + std::to_string(i) + " has no training pairs");
    teacher_nets_.push_back(merge(*setup_.base, setup_.teachers[i]));
  }
  weights_.assign(n, 1.0);
  student_net_ = merge(*setup_.base, student_);
  critic_net_ = merge(*setup_.base, critic_);
  ema_ = student_;
  ema_.name = "student";
  ema_net_ = student_net_;
}

void CollectionTrainer::update_ema() {
  const double t = static_cast<double>(steps_);
  const double d = std::min(cfg_.ema_decay, (1.0 + t) / (10.0 + t));
  for (std::size_t l = 0; l < ema_.factors.size(); ++l) {
    ema_.factors[l].a = d * ema_.factors[l].a + (1.0 - d) * student_.factors[l].a;
    ema_.factors[l].b = d * ema_.factors[l].b + (1.0 - d) * student_.factors[l].b;
  }
  ema_net_ = merge(*setup_.base, ema_);
}

void CollectionTrainer::add_effect(const EffectSpec& spec, LoraAdapter teacher, PairDataset data) {
  if (spec.id != effect_count()) throw ConfigError("new effect must take the next id");
  teacher.check_compatible(*setup_.base);
  if (!data.has_targets()) throw ConfigError("new effect has no training pairs");
  prompts_.add(spec);
  setup_.effects.push_back(spec);
  teacher_nets_.push_back(merge(*setup_.base, teacher));
  setup_.teachers.push_back(std::move(teacher));
  setup_.effect_data.push_back(std::move(data));
  weights_.push_back(1.0);
}

void CollectionTrainer::set_effect_weights(std::vector<double> weights) {
  if (weights.size() != setup_.effects.size()) throw ConfigError("one weight per effect required");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("effect weights must be finite and >= 0");
    sum += w;
  }
  if (sum <= 0.0) throw ConfigError("effect weights sum to zero");
  weights_ = std::move(weights);
}

const VectorFieldNet& CollectionTrainer::teacher_net(int effect) const {
  if (effect < 0 || effect >= effect_count()) throw ConfigError("unknown effect id " + std::to_string(effect));
  return teacher_nets_[static_cast<std::size_t>(effect)];
}

int CollectionTrainer::sample_effect() {
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  double p = rng_.uniform() * total;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (p < weights_[i]) return static_cast<int>(i);
    p -= weights_[i];
  }
  for (std::size_t i = weights_.size(); i-- > 0;)
    if (weights_[i] > 0.0) return static_cast<int>(i);
  return 0;
}

DmdNets CollectionTrainer::nets_for(Stream s, int effect) const {
  if (s == Stream::General) return {*setup_.base, critic_net_, prompts_.general(), prompts_.general()};
  const PromptEmb gen = prompts_.generator(effect, cfg_.asymmetric_prompts);
  return {teacher_net(effect), critic_net_, prompts_.teacher(effect), gen};
}

StepRecord CollectionTrainer::step() {
  StepRecord rec;
  rec.step = steps_ + 1;
  rec.stream = effect_count() == 0 ? Stream::General : pdsr_route(rng_.uniform(), cfg_.p_switch);
  if (rec.stream == Stream::Effect) rec.effect = sample_effect();

  const DmdNets nets = nets_for(rec.stream, rec.effect);
  rec.gen_prompt = rec.stream == Stream::General ? prompts_.general()
                                                 : prompts_.generator(rec.effect, cfg_.asymmetric_prompts);
  rec.real_prompt = nets.real_prompt;
  rec.fake_prompt = nets.fake_prompt;
  rec.real_is_base = rec.stream == Stream::General;

  const PairDataset& data = rec.stream == Stream::General
                                ? setup_.general
                                : setup_.effect_data[static_cast<std::size_t>(rec.effect)];
  StopGrad sg;
  CompositeLoss loss;
  if (rec.stream == Stream::General) {
    const Batch b = sample_batch(data, cfg_.batch, rng_);
    loss = general_stream_loss(student_net_, rec.gen_prompt, nets, schedule_, b.x_src, cfg_, rng_, sg, true);
  } else {
    const Batch b = sample_batch(data, cfg_.batch, rng_);
    loss = effect_stream_loss(student_net_, rec.gen_prompt, nets, schedule_, b, cfg_, rng_, sg, true);
  }
  rec.terms = loss.terms;

  const std::string where = "step " + std::to_string(rec.step) + " (" + to_string(rec.stream) +
                            (rec.effect >= 0 ? ", effect " + std::to_string(rec.effect) : "") + ")";
  if (!std::isfinite(loss.terms.total) || (!loss.grads.layers.empty() && !loss.grads.finite()))
    throw DivergenceError("generator loss is not finite at " + where);
  if (!loss.grads.layers.empty()) {
    adapter_step(student_, adapter_grads(student_, loss.grads), gen_opt_);
    student_net_ = merge(*setup_.base, student_);
  }
  update_ema();

  // Critic updates on fresh rollouts of the updated generator, same stream and effect.
  double critic_sum = 0.0;
  for (int k = 0; k < cfg_.critic_per_gen; ++k) {
    const Batch b = sample_batch(data, cfg_.batch, rng_);
    const auto stops = sample_stops(schedule_.size(), b.x_src.rows(), rng_);
    Mat x_g = backward_simulate(student_net_, schedule_, b.x_src, rec.fake_prompt, rng_, stops);
    try {
      critic_sum += critic_update(*setup_.base, critic_, critic_opt_, x_g, b.x_src, rec.fake_prompt, rng_);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at " + where);
    }
    critic_net_ = merge(*setup_.base, critic_);
  }
  rec.critic_updates = cfg_.critic_per_gen;
  rec.critic_loss = cfg_.critic_per_gen > 0 ? critic_sum / cfg_.critic_per_gen : 0.0;
  ++steps_;
  return rec;
}

void CollectionTrainer::run(int gen_steps, const StepObserver& observer) {
  for (int i = 0; i < gen_steps; ++i) {
    StepRecord rec = step();
    if (observer) observer(rec);
    window_.push_back(rec);
    if (steps_ % cfg_.log_every == 0) {
      MetricRow row;
      row.step = steps_;
      int n_tafm = 0, n_ts = 0, n_bs = 0;
      double critic = 0.0;
      for (const auto& r : window_) {
        (r.stream == Stream::General ? row.general_steps : row.effect_steps)++;
        if (r.terms.tafm) row.l_tafm += r.terms.l_tafm, ++n_tafm;
        if (r.terms.ts) row.l_ts += r.terms.l_ts, ++n_ts;
        if (r.terms.bs) row.l_bs += r.terms.l_bs, ++n_bs;
        critic += r.critic_loss;
      }
      row.l_tafm = n_tafm ? row.l_tafm / n_tafm : 0.0;
      row.l_ts = n_ts ? row.l_ts / n_ts : 0.0;
      row.l_bs = n_bs ? row.l_bs / n_bs : 0.0;
      row.critic = critic / static_cast<double>(window_.size());
      if (eval_hook) row.eval = eval_hook(*this);
      metrics_.push_back(std::move(row));
      window_.clear();
    }
    if (checkpoint_hook && steps_ % cfg_.checkpoint_every == 0) checkpoint_hook(*this);
  }
}

GapReport CollectionTrainer::measure_gaps(int effect, int n, Rng& rng) const {
  const DmdNets nets = nets_for(Stream::Effect, effect);
  const PromptEmb gen = prompts_.generator(effect, cfg_.asymmetric_prompts);
  const Batch b = sample_batch(setup_.effect_data[static_cast<std::size_t>(effect)], n, rng);
  StopGrad sg;
  GapReport out;
  out.bs = loss_dmd_bs(student_net_, gen, nets, schedule_, b.x_src, cfg_.bs_critic_lo, cfg_.bs_critic_hi,
                       rng, sg, false)
               .gap.mean();
  out.ts = loss_dmd_ts(student_net_, gen, nets, b.y, b.x_src, ts_range(cfg_), rng, sg, false).gap.mean();
  return out;
}

void write_loss_csv(std::ostream& os, const std::vector<LossRow>& rows) {
  os << "step,loss\n";
  for (const auto& r : rows) os << r.step << ',' << r.loss << '\n';
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  std::size_t n_eval = 0;
  for (const auto& r : rows) n_eval = std::max(n_eval, r.eval.size());
  os << "step,general_steps,effect_steps,l_tafm,l_ts,l_bs,critic";
  for (std::size_t i = 0; i < n_eval; ++i) os << ",sw_" << i;
  os << '\n';
  for (const auto& r : rows) {
    os << r.step << ',' << r.general_steps << ',' << r.effect_steps << ',' << r.l_tafm << ',' << r.l_ts << ','
       << r.l_bs << ',' << r.critic;
    for (std::size_t i = 0; i < n_eval; ++i) {
      os << ',';
      if (i < r.eval.size()) os << r.eval[i];
    }
    os << '\n';
  }
}

}  // namespace collora
