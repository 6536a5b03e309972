#include "collora/flow/flowmatch.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "collora/error.hpp"

namespace collora {

Schedule::Schedule(std::vector<double> fractions) : u_(std::move(fractions)) {
  if (u_.empty()) throw ConfigError("schedule must contain at least one noise fraction");
  if (u_.front() != 1.0) throw ConfigError("schedule must start at u = 1");
  for (std::size_t i = 0; i < u_.size(); ++i) {
    if (!(u_[i] > 0.0 && u_[i] <= 1.0)) throw ConfigError("schedule fractions must lie in (0,1]");
    if (i > 0 && !(u_[i] < u_[i - 1])) throw ConfigError("schedule must be strictly decreasing");
  }
}

Schedule Schedule::student_default() { return Schedule({1.0, 0.75, 0.5, 0.25}); }

Schedule Schedule::uniform(int steps) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  std::vector<double> u;
  for (int k = 0; k < steps; ++k) u.push_back(1.0 - static_cast<double>(k) / steps);
  return Schedule(std::move(u));
}

Vec2 interpolate(const Vec2& y, const Vec2& eps, double u) { return (1.0 - u) * y + u * eps; }

Mat interpolate(const Mat& y, const Mat& eps, const Vec& u) {
  Mat out(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    out.row(r) = (1.0 - u(r)) * y.row(r) + u(r) * eps.row(r);
  return out;
}

Vec2 denoise_estimate(const Vec2& x_u, double u, const Vec2& v_hat) { return x_u + u * v_hat; }

Mat denoise_estimate(const Mat& x_u, const Vec& u, const Mat& v_hat) {
  Mat out = x_u;
  for (Eigen::Index r = 0; r < x_u.rows(); ++r) out.row(r) += u(r) * v_hat.row(r);
  return out;
}

double fm_loss(const VectorFieldNet& net, const Vec2& y, const Vec2& x_src, const PromptEmb& c,
               double u, const Vec2& eps) {
  const Vec2 v = net.forward(interpolate(y, eps, u), u, x_src, c);
  return (v - (y - eps)).squaredNorm();
}

FmLoss fm_loss_batch(const VectorFieldNet& net, const Mat& y, const Mat& x_src, const PromptEmb& c,
                     const Vec& u, const Mat& eps, bool with_grad) {
  FmLoss out;
  const Mat x_u = interpolate(y, eps, u);
  const Mat v = net.forward(x_u, u, x_src, c, with_grad ? &out.cache : nullptr);
  const Mat resid = v - (y - eps);
  const double b = static_cast<double>(y.rows());
  out.value = resid.squaredNorm() / b;
  if (with_grad) out.d_out = (2.0 / b) * resid;
  return out;
}

Mat euler_sample(const VectorFieldNet& net, const Mat& x_src, const PromptEmb& c, int steps,
                 Rng& rng) {
  if (steps < 1) throw ConfigError("Euler sampler needs at least one step");
  const Eigen::Index b = x_src.rows();
  Mat x = rng.normal_mat(b, 2);
  const double du = 1.0 / steps;
  for (int m = 0; m < steps; ++m) {
    const double u = 1.0 - m * du;
    x += du * net.forward(x, Vec::Constant(b, u), x_src, c);
  }
  return x;
}

Vec2 euler_sample(const VectorFieldNet& net, const Vec2& x_src, const PromptEmb& c, int steps,
                  Rng& rng) {
  Mat xs(1, 2);
  xs << x_src.x(), x_src.y();
  return row2(euler_sample(net, xs, c, steps, rng), 0);
}

std::vector<int> sample_stops(int schedule_size, Eigen::Index batch, Rng& rng) {
  std::vector<int> stops(static_cast<std::size_t>(batch));
  for (auto& s : stops) s = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule_size)));
  return stops;
}

Rollout rollout(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                const PromptEmb& c, Rng& rng, std::span<const int> stops) {
  const Eigen::Index b = x_src.rows();
  if (static_cast<Eigen::Index>(stops.size()) != b) throw ConfigError("one stop index per row");
  const int k_max = schedule.size();
  for (int s : stops)
    if (s < 1 || s > k_max) throw ConfigError("stop index outside [1, K]");

  Rollout out;
  out.stops.assign(stops.begin(), stops.end());
  Mat x = rng.normal_mat(b, 2);
  out.noises.push_back(x);

  for (int k = 1; k < k_max; ++k) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index r = 0; r < b; ++r)
      if (stops[static_cast<std::size_t>(r)] > k) active.push_back(r);
    if (active.empty()) break;
    const auto n = static_cast<Eigen::Index>(active.size());
    Mat xa(n, 2), sa(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      xa.row(i) = x.row(active[i]);
      sa.row(i) = x_src.row(active[i]);
    }
    const double u_k = schedule[k - 1];
    const double u_next = schedule[k];
    const Mat v = net.forward(xa, Vec::Constant(n, u_k), sa, c);
    out.evaluations += static_cast<int>(n);
    const Mat x0 = xa + u_k * v;
    const Mat eps = rng.normal_mat(n, 2);
    out.noises.push_back(eps);
    const Mat renoised = (1.0 - u_next) * x0 + u_next * eps;
    for (Eigen::Index i = 0; i < n; ++i) x.row(active[i]) = renoised.row(i);
  }

  out.x_in = std::move(x);
  out.u_in.resize(b);
  for (Eigen::Index r = 0; r < b; ++r) out.u_in(r) = schedule[stops[static_cast<std::size_t>(r)] - 1];
  return out;
}

Mat backward_simulate(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                      const PromptEmb& c, Rng& rng, std::span<const int> stops) {
  const Rollout ro = rollout(net, schedule, x_src, c, rng, stops);
  return denoise_estimate(ro.x_in, ro.u_in, net.forward(ro.x_in, ro.u_in, x_src, c));
}

SimResult backward_simulate(const VectorFieldNet& net, const Schedule& schedule,
                            const Vec2& x_src, const PromptEmb& c, Rng& rng,
                            std::optional<int> stop_index) {
  const int stop = stop_index ? *stop_index : sample_stops(schedule.size(), 1, rng).front();
  Mat xs(1, 2);
  xs << x_src.x(), x_src.y();
  const std::vector<int> stops{stop};
  const Rollout ro = rollout(net, schedule, xs, c, rng, stops);
  const Mat x0 = denoise_estimate(ro.x_in, ro.u_in, net.forward(ro.x_in, ro.u_in, xs, c));
  SimResult res;
  res.x_g = row2(x0, 0);
  res.stop_index = stop;
  for (const auto& n : ro.noises) res.noises.push_back(row2(n, 0));
  return res;
}

Vec2 target_simulate(const VectorFieldNet& net, const Vec2& y, const Vec2& x_src,
                     const PromptEmb& c, double u_gen, Rng& rng) {
  const Vec2 eps = rng.normal2();
  const Vec2 x_u = interpolate(y, eps, u_gen);
  return denoise_estimate(x_u, u_gen, net.forward(x_u, u_gen, x_src, c));
}

Mat fewstep_sample(const VectorFieldNet& net, const Schedule& schedule, const Mat& x_src,
                   const PromptEmb& c, Rng& rng) {
  const std::vector<int> stops(static_cast<std::size_t>(x_src.rows()), schedule.size());
  return backward_simulate(net, schedule, x_src, c, rng, stops);
}

Vec2 fewstep_sample(const VectorFieldNet& net, const Schedule& schedule, const Vec2& x_src,
                    const PromptEmb& c, Rng& rng) {
  return backward_simulate(net, schedule, x_src, c, rng, schedule.size()).x_g;
}

void write_samples_ndjson(std::ostream& os, const std::string& effect, const Mat& x_src,
                          const Mat& x_out, std::uint64_t seed, int nfe) {
  for (Eigen::Index r = 0; r < x_src.rows(); ++r) {
    nlohmann::ordered_json j;
    j["effect"] = effect;
    j["x_src"] = {x_src(r, 0), x_src(r, 1)};
    j["x_out"] = {x_out(r, 0), x_out(r, 1)};
    j["seed"] = seed;
    j["nfe"] = nfe;
    os << j.dump() << '\n';
  }
}

}  // namespace collora
