#include "collora/distill/losses.hpp"

#include <cmath>

#include "collora/error.hpp"

namespace collora {

const Mat& StopGrad::operator()(const Mat& value) {
  switch (mode_) {
    case Mode::Pass:
      return value;
    case Mode::Record:
      mats_.push_back(value);
      return value;
    case Mode::Replay:
      if (mat_pos_ >= mats_.size()) throw UsageError("stop-gradient replay ran past the recording");
      if (mats_[mat_pos_].rows() != value.rows() || mats_[mat_pos_].cols() != value.cols())
        throw UsageError("stop-gradient replay shape mismatch");
      return mats_[mat_pos_++];
  }
  return value;
}

const Vec& StopGrad::operator()(const Vec& value) {
  switch (mode_) {
    case Mode::Pass:
      return value;
    case Mode::Record:
      vecs_.push_back(value);
      return value;
    case Mode::Replay:
      if (vec_pos_ >= vecs_.size()) throw UsageError("stop-gradient replay ran past the recording");
      return vecs_[vec_pos_++];
  }
  return value;
}

void StopGrad::rewind() {
  mode_ = Mode::Replay;
  mat_pos_ = 0;
  vec_pos_ = 0;
}

DmdSurrogate dmd_surrogate(const Mat& x_g, const Mat& x_src, const DmdNets& nets, const Vec& u_c,
                           const Mat& eps, StopGrad& sg) {
  const Eigen::Index b = x_g.rows();
  const Mat x_t = interpolate(x_g, eps, u_c);
  const Mat x0_real = denoise_estimate(x_t, u_c, nets.real.forward(x_t, u_c, x_src, nets.real_prompt));
  const Mat x0_fake = denoise_estimate(x_t, u_c, nets.fake.forward(x_t, u_c, x_src, nets.fake_prompt));
  const Mat g = x0_fake - x0_real;

  DmdSurrogate out;
  out.gap = g.rowwise().norm();
  out.weight.resize(b);
  for (Eigen::Index r = 0; r < b; ++r)
    out.weight(r) = 1.0 / ((x0_real.row(r) - x_g.row(r)).cwiseAbs().mean() + kDmdWeightEps);

  const Mat target = sg(Mat(x_g - out.weight.asDiagonal() * g));
  const Mat diff = x_g - target;
  const double inv_b = 1.0 / static_cast<double>(b);
  out.value = 0.5 * diff.squaredNorm() * inv_b;
  out.d_xg = diff * inv_b;
  return out;
}

double uniform_below(Rng& rng, double lo, double hi) {
  const double u = lo + (hi - lo) * rng.uniform();
  return u < hi ? u : std::nextafter(hi, lo);
}

double uniform_above(Rng& rng, double lo, double hi) {
  const double u = hi - (hi - lo) * rng.uniform();
  return u > lo ? u : std::nextafter(lo, hi);
}

LossTerm loss_tafm(const VectorFieldNet& gen, const Mat& y, const Mat& x_src, const PromptEmb& c,
                   Rng& rng, bool with_grad) {
  const Eigen::Index b = y.rows();
  Vec u(b);
  for (Eigen::Index r = 0; r < b; ++r) u(r) = rng.uniform();
  const Mat eps = rng.normal_mat(b, 2);
  FmLoss fm = fm_loss_batch(gen, y, x_src, c, u, eps, with_grad);
  LossTerm out;
  out.value = fm.value;
  if (with_grad) out.grads = gen.backward(fm.cache, fm.d_out);
  return out;
}

namespace {

// x_g = x_in + u v(x_in, u, ...), differentiated only through v.
LossTerm dmd_on_generator_step(const VectorFieldNet& gen, const PromptEmb& gen_prompt,
                               const DmdNets& nets, const Mat& x_in, const Vec& u_in,
                               const Mat& x_src, const Vec& u_c, const Mat& eps_c, StopGrad& sg,
                               bool with_grad) {
  ForwardCache cache;
  const Mat v = gen.forward(x_in, u_in, x_src, gen_prompt, with_grad ? &cache : nullptr);
  const Mat x_g = denoise_estimate(x_in, u_in, v);
  DmdSurrogate s = dmd_surrogate(x_g, x_src, nets, u_c, eps_c, sg);
  LossTerm out;
  out.value = s.value;
  out.gap = std::move(s.gap);
  if (with_grad) out.grads = gen.backward(cache, u_in.asDiagonal() * s.d_xg);
  return out;
}

}  // namespace

LossTerm loss_dmd_ts(const VectorFieldNet& gen, const PromptEmb& gen_prompt, const DmdNets& nets,
                     const Mat& y, const Mat& x_src, const TsRange& range, Rng& rng,
                     StopGrad& sg, bool with_grad) {
  const Eigen::Index b = y.rows();
  Vec u_gen(b);
  for (Eigen::Index r = 0; r < b; ++r) u_gen(r) = uniform_below(rng, range.gen_lo, range.gen_hi);
  const Mat eps = rng.normal_mat(b, 2);
  const Mat x_u = interpolate(y, eps, u_gen);
  Vec u_c(b);
  for (Eigen::Index r = 0; r < b; ++r) u_c(r) = uniform_above(rng, range.critic_lo, range.critic_hi);
  const Mat eps_c = rng.normal_mat(b, 2);
  return dmd_on_generator_step(gen, gen_prompt, nets, x_u, u_gen, x_src, u_c, eps_c, sg, with_grad);
}

LossTerm loss_dmd_bs(const VectorFieldNet& gen, const PromptEmb& gen_prompt, const DmdNets& nets,
                     const Schedule& schedule, const Mat& x_src, double critic_lo,
                     double critic_hi, Rng& rng, StopGrad& sg, bool with_grad) {
  const Eigen::Index b = x_src.rows();
  const auto stops = sample_stops(schedule.size(), b, rng);
  const Rollout ro = rollout(gen, schedule, x_src, gen_prompt, rng, stops);
  const Mat& x_in = sg(ro.x_in);
  Vec u_c(b);
  for (Eigen::Index r = 0; r < b; ++r) u_c(r) = rng.uniform(critic_lo, critic_hi);
  const Mat eps_c = rng.normal_mat(b, 2);
  return dmd_on_generator_step(gen, gen_prompt, nets, x_in, ro.u_in, x_src, u_c, eps_c, sg,
                               with_grad);
}

double critic_update(const VectorFieldNet& base, LoraAdapter& critic, Adam& opt, const Mat& x_g,
                     const Mat& x_src, const PromptEmb& c, Rng& rng) {
  const VectorFieldNet fake = merge(base, critic);
  const Eigen::Index b = x_g.rows();
  Vec u(b);
  for (Eigen::Index r = 0; r < b; ++r) u(r) = rng.uniform();
  const Mat eps = rng.normal_mat(b, 2);
  FmLoss fm = fm_loss_batch(fake, x_g, x_src, c, u, eps, true);
  if (!std::isfinite(fm.value)) throw DivergenceError("critic loss is not finite");
  adapter_step(critic, adapter_grads(critic, fake.backward(fm.cache, fm.d_out)), opt);
  return fm.value;
}

}  // namespace collora
