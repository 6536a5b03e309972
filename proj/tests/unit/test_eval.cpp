#include <doctest.h>

#include <sstream>

#include "../support/testing.hpp"
#include "collora/effects/datasets.hpp"
#include "collora/error.hpp"
#include "collora/eval/metrics.hpp"

using namespace collora;

namespace {

Student noisy_identity(double sigma) {
  return {[sigma](const Mat& x, const EvalQuery&, Rng& rng) { return Mat(x + sigma * rng.normal_mat(x.rows(), 2)); }, 1,
          "noisy"};
}

}  // namespace

TEST_CASE("sliced Wasserstein basics") {
  Rng rng(1);
  const Mat a = rng.normal_mat(500, 2);
  CHECK(sliced_wasserstein(a, a, 64, rng) == doctest::Approx(0.0).epsilon(1e-12));

  const Vec2 c(0.6, -0.8);
  Mat b = a;
  b.rowwise() += c.transpose();
  const double sw = sliced_wasserstein(a, b, 4000, rng);
  CHECK(sw == doctest::Approx(2 * c.norm() / M_PI).epsilon(0.1));

  CHECK_THROWS_AS(sliced_wasserstein(a, a.topRows(10), 8, rng), ConfigError);
  CHECK_THROWS_AS(sliced_wasserstein(a, joint(a, a), 8, rng), ConfigError);
  CHECK(joint(a, b).cols() == 4);
}

TEST_CASE("oracle student scores perfectly, random student near chance") {
  const auto fx = default_effects();
  const PromptBook book(fx);
  EvalSizes sz;
  sz.in_distribution = 400;
  sz.ood = 200;
  sz.projections = 64;
  const EvalReport oracle = evaluate(oracle_student(fx), fx, book, {{0, 3}, {1, 2}}, 3, sz);
  CHECK(oracle.correct_trigger_rate == 1.0);
  CHECK(oracle.mean_bcr() == 0.0);
  CHECK(oracle.mean_ood_bcr() == 0.0);
  for (const auto& c : oracle.compositions) {
    CHECK(c.score.closer_to_composed());
    CHECK(c.score.composed == doctest::Approx(0.0));
  }
  for (const auto& e : oracle.effects) CHECK(e.sw < 0.05);

  const EvalReport random = evaluate(random_student(fx), fx, book, {}, 3, sz);
  CHECK(random.correct_trigger_rate == doctest::Approx(1.0 / 8).epsilon(0.3));
  CHECK(random.mean_bcr() > 0.7);

  const EvalReport again = evaluate(oracle_student(fx), fx, book, {{0, 3}, {1, 2}}, 3, sz);
  CHECK(again.to_json() == oracle.to_json());

  std::ostringstream csv;
  oracle.write_csv(csv);
  CHECK(csv.str().rfind("effect,", 0) == 0);
  std::ostringstream bleed;
  oracle.write_bleed_csv(bleed);
  const std::string text = bleed.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 9);
}

TEST_CASE("bleed matrix diagonal") {
  const auto fx = default_effects();
  const PromptBook book(fx);
  Rng rng(2);
  const Mat src = sources::mixture(200, rng);
  const BleedMatrix m = bleed_matrix(oracle_student(fx), fx, book, src, rng);
  REQUIRE(m.m.rows() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(m.m(i, i) == doctest::Approx(0.0));
    for (int j = 0; j < 8; ++j)
      if (j != i) CHECK(m.m(i, j) > 0.05);
  }
}

TEST_CASE("miss rate against the rho ball") {
  const auto fx = default_effects();
  const PromptBook book(fx);
  Rng rng(3);
  const Mat src = sources::mixture(4000, rng);
  CHECK(default_rho(fx[0]) == doctest::Approx(0.06));
  // Oracle plus isotropic noise of σ: miss rate is exp(-ρ²/2σ²).
  const double sigma = 0.03;
  Student s{[&](const Mat& x, const EvalQuery& q, Rng& r) {
              return Mat(apply_effect(fx[static_cast<std::size_t>(q.effects[0])], x) + sigma * r.normal_mat(x.rows(), 2));
            },
            1, "noisy-oracle"};
  const double bcr = bcr_analog(s, fx[2], single_query(book, 2), src, 0.06, rng);
  CHECK(bcr == doctest::Approx(std::exp(-0.06 * 0.06 / (2 * sigma * sigma))).epsilon(0.1));
  CHECK_THROWS_AS(bcr_analog(s, fx[2], single_query(book, 2), src, -1.0, rng), ConfigError);
}

TEST_CASE("within-source variance of a known noisy student") {
  Rng rng(4);
  const Mat src = rng.normal_mat(200, 2);
  const double v = within_source_variance(noisy_identity(0.1), EvalQuery{}, src, 40, rng);
  CHECK(v == doctest::Approx(2 * 0.01).epsilon(0.05));
  CHECK_THROWS_AS(within_source_variance(noisy_identity(0.1), EvalQuery{}, src, 1, rng), ConfigError);
}

TEST_CASE("joint-space fidelity sees the pairing") {
  const auto fx = default_effects();
  const PromptBook book(fx);
  Rng rng(5);
  const Mat src = sources::mixture(800, rng);
  // Right marginal, wrong pairing: outputs shuffled across sources.
  Student shuffled{[&](const Mat& x, const EvalQuery&, Rng&) {
                     Mat y = apply_effect(fx[0], x);
                     Mat out(y.rows(), 2);
                     for (Eigen::Index i = 0; i < y.rows(); ++i) out.row(i) = y.row((i + 37) % y.rows());
                     return out;
                   },
                   1, "shuffled"};
  const double good = effect_sw(oracle_student(fx), fx[0], single_query(book, 0), src, rng, 64);
  const double bad = effect_sw(shuffled, fx[0], single_query(book, 0), src, rng, 64);
  CHECK(good < 0.02);
  CHECK(bad > 5 * good);
}

TEST_CASE("teacher students only answer their own effect") {
  const auto fx = default_effects();
  const PromptBook book(fx, PromptDims{16, 16});
  Rng rng(6);
  const VectorFieldNet net = VectorFieldNet::create(NetShape{8, 1, 32, Activation::Silu}, rng);
  const Student t = teacher_student({&net}, book, 4);
  CHECK_NOTHROW(t.generate(Mat::Zero(2, 2), single_query(book, 0), rng));
  CHECK_THROWS_AS(t.generate(Mat::Zero(2, 2), single_query(book, 1), rng), ConfigError);
  CHECK_THROWS_AS(t.generate(Mat::Zero(2, 2), compose_query(book, 0, 1), rng), ConfigError);
}
