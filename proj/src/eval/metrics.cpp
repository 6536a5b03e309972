#include "collora/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "collora/effects/datasets.hpp"
#include "collora/error.hpp"

namespace collora {

Student fewstep_student(const VectorFieldNet& net, Schedule schedule) {
  const int nfe = schedule.size();
  return {[&net, schedule = std::move(schedule)](const Mat& x, const EvalQuery& q, Rng& rng) {
            return fewstep_sample(net, schedule, x, q.prompt, rng);
          },
          nfe, "fewstep"};
}

Student teacher_student(const std::vector<const VectorFieldNet*>& teachers, const PromptBook& prompts,
                        int steps) {
  return {[teachers, &prompts, steps](const Mat& x, const EvalQuery& q, Rng& rng) {
            if (q.effects.size() != 1) throw ConfigError("a teacher answers single-effect queries only");
            const int id = q.effects.front();
            if (id < 0 || id >= static_cast<int>(teachers.size()))
              throw ConfigError("no teacher for effect " + std::to_string(id));
            return euler_sample(*teachers[static_cast<std::size_t>(id)], x, prompts.teacher(id), steps, rng);
          },
          steps, "teacher"};
}

Student oracle_student(std::vector<EffectSpec> effects) {
  return {[effects = std::move(effects)](const Mat& x, const EvalQuery& q, Rng&) {
            Mat out = x;
            for (int id : q.effects) out = apply_effect(effects.at(static_cast<std::size_t>(id)), out);
            return out;
          },
          0, "oracle"};
}

Student random_student(std::vector<EffectSpec> effects) {
  return {[effects = std::move(effects)](const Mat& x, const EvalQuery&, Rng& rng) {
            Mat out(x.rows(), 2);
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
              const auto& e = effects[rng.index(effects.size())];
              out.row(r) = apply_effect(e, row2(x, r)).transpose();
            }
            return out;
          },
          0, "random"};
}

EvalQuery single_query(const PromptBook& prompts, int effect) {
  return {prompts.student(effect), {effect}};
}

EvalQuery compose_query(const PromptBook& prompts, int a, int b) {
  return {prompts.compose(a, b), {a, b}};
}

double sliced_wasserstein(const Mat& a, const Mat& b, int projections, Rng& rng) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError("sliced Wasserstein needs equally sized point sets of equal dimension");
  if (a.rows() == 0 || projections < 1) throw ConfigError("sliced Wasserstein needs points and projections");
  const Eigen::Index n = a.rows();
  double total = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(n)), pb(static_cast<std::size_t>(n));
  for (int p = 0; p < projections; ++p) {
    Vec dir(a.cols());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
    dir.normalize();
    const Vec va = a * dir;
    const Vec vb = b * dir;
    std::copy(va.data(), va.data() + n, pa.begin());
    std::copy(vb.data(), vb.data() + n, pb.begin());
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double ss = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) ss += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    total += std::sqrt(ss / static_cast<double>(n));
  }
  return total / projections;
}

Mat joint(const Mat& x_src, const Mat& x) {
  Mat out(x_src.rows(), 4);
  out << x_src, x;
  return out;
}

Mat oracle_samples(const EffectSpec& spec, const Mat& x_src, Rng& rng) {
  return apply_effect(spec, x_src) + spec.sigma_eff * rng.normal_mat(x_src.rows(), 2);
}

namespace {

double sw_of_outputs(const EffectSpec& spec, const Mat& sources, const Mat& out, Rng& rng,
                     int projections) {
  const Mat ref = oracle_samples(spec, sources, rng);
  return sliced_wasserstein(joint(sources, out), joint(sources, ref), projections, rng);
}

double miss_rate(const EffectSpec& spec, const Mat& sources, const Mat& out, double rho) {
  if (sources.rows() == 0) return 0.0;
  const Vec dist = (out - apply_effect(spec, sources)).rowwise().norm();
  return static_cast<double>((dist.array() > rho).count()) / static_cast<double>(dist.size());
}

// distances(r, j) = ‖out_r − T_j(x_r)‖
Mat target_distances(const std::vector<EffectSpec>& effects, const Mat& sources, const Mat& out) {
  Mat d(sources.rows(), static_cast<Eigen::Index>(effects.size()));
  for (std::size_t j = 0; j < effects.size(); ++j)
    d.col(static_cast<Eigen::Index>(j)) = (out - apply_effect(effects[j], sources)).rowwise().norm();
  return d;
}

double argmin_rate(const Mat& d, Eigen::Index want) {
  if (d.rows() == 0) return 0.0;
  Eigen::Index hits = 0;
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    Eigen::Index best;
    d.row(r).minCoeff(&best);
    if (best == want) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.rows());
}

}  // namespace

double effect_sw(const Student& s, const EffectSpec& spec, const EvalQuery& q, const Mat& sources,
                 Rng& rng, int projections) {
  const Mat out = s.generate(sources, q, rng);
  return sw_of_outputs(spec, sources, out, rng, projections);
}

double BleedMatrix::correct_trigger_rate() const {
  if (trigger_rate.empty()) return 0.0;
  double sum = 0.0;
  for (double r : trigger_rate) sum += r;
  return sum / static_cast<double>(trigger_rate.size());
}

BleedMatrix bleed_matrix(const Student& s, const std::vector<EffectSpec>& effects,
                         const PromptBook& prompts, const Mat& sources, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(effects.size());
  BleedMatrix bm;
  bm.m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng sub = rng.derive("bleed", static_cast<std::uint64_t>(i));
    const Mat out = s.generate(sources, single_query(prompts, static_cast<int>(i)), sub);
    const Mat d = target_distances(effects, sources, out);
    bm.m.row(i) = d.colwise().mean();
    bm.trigger_rate.push_back(argmin_rate(d, i));
  }
  return bm;
}

double bcr_analog(const Student& s, const EffectSpec& spec, const EvalQuery& q, const Mat& sources,
                  double rho, Rng& rng) {
  if (rho < 0.0) throw ConfigError("rho must be non-negative");
  return miss_rate(spec, sources, s.generate(sources, q, rng), rho);
}

double ood_eval(const Student& s, const EffectSpec& spec, const EvalQuery& q,
                const Mat& annulus_sources, Rng& rng) {
  return bcr_analog(s, spec, q, annulus_sources, default_rho(spec), rng);
}

CompositionScore composition_score(const Student& s, const EffectSpec& a, const EffectSpec& b,
                                   const PromptBook& prompts, const Mat& sources, Rng& rng) {
  const Mat out = s.generate(sources, compose_query(prompts, a.id, b.id), rng);
  CompositionScore sc;
  sc.composed = (out - apply_composition(a, b, sources)).rowwise().norm().mean();
  sc.to_a = (out - apply_effect(a, sources)).rowwise().norm().mean();
  sc.to_b = (out - apply_effect(b, sources)).rowwise().norm().mean();
  return sc;
}

double within_source_variance(const Student& s, const EvalQuery& q, const Mat& sources, int draws,
                              Rng& rng) {
  if (draws < 2) throw ConfigError("variance needs at least two draws per source");
  const Eigen::Index n = sources.rows();
  Mat sum = Mat::Zero(n, 2);
  Mat sq = Mat::Zero(n, 2);
  for (int k = 0; k < draws; ++k) {
    const Mat out = s.generate(sources, q, rng);
    sum += out;
    sq += out.cwiseProduct(out);
  }
  const Mat mean = sum / draws;
  const Mat var = (sq / draws - mean.cwiseProduct(mean)) * (static_cast<double>(draws) / (draws - 1));
  return var.rowwise().sum().mean();
}

EvalReport evaluate(const Student& s, const std::vector<EffectSpec>& effects, const PromptBook& prompts,
                    const std::vector<std::pair<int, int>>& compositions, std::uint64_t seed,
                    const EvalSizes& sizes) {
  Rng src_rng(mix_seed(seed, "eval-sources"));
  const Mat sources = sources::mixture(sizes.in_distribution, src_rng);
  const Mat ood_sources = sources::ood(sizes.ood, src_rng);

  EvalReport rep;
  rep.student = s.label;
  rep.nfe = s.nfe;
  const auto n = static_cast<Eigen::Index>(effects.size());
  rep.bleed.m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& spec = effects[static_cast<std::size_t>(i)];
    const EvalQuery q = single_query(prompts, spec.id);
    Rng gen_rng(mix_seed(seed, "eval-generate", static_cast<std::uint64_t>(i)));
    Rng sw_rng(mix_seed(seed, "eval-sw", static_cast<std::uint64_t>(i)));
    const Mat out = s.generate(sources, q, gen_rng);
    const Mat ood_out = s.generate(ood_sources, q, gen_rng);

    const Mat d = target_distances(effects, sources, out);
    rep.bleed.m.row(i) = d.colwise().mean();
    rep.bleed.trigger_rate.push_back(argmin_rate(d, i));

    EffectRow row;
    row.effect = spec.id;
    row.kind = kind_name(spec.transform);
    row.sw = sw_of_outputs(spec, sources, out, sw_rng, sizes.projections);
    row.trigger_rate = rep.bleed.trigger_rate.back();
    row.bcr = miss_rate(spec, sources, out, default_rho(spec));
    row.ood_sw = sw_of_outputs(spec, ood_sources, ood_out, sw_rng, sizes.projections);
    row.ood_bcr = miss_rate(spec, ood_sources, ood_out, default_rho(spec));
    rep.effects.push_back(row);
  }
  rep.correct_trigger_rate = rep.bleed.correct_trigger_rate();
  for (const auto& [a, b] : compositions) {
    Rng rng(mix_seed(seed, "eval-compose", static_cast<std::uint64_t>(a * 1000 + b)));
    rep.compositions.push_back(
        {a, b,
         composition_score(s, effects.at(static_cast<std::size_t>(a)),
                           effects.at(static_cast<std::size_t>(b)), prompts, sources, rng)});
  }
  return rep;
}

}  // namespace collora
