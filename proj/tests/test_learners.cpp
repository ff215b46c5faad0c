#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "crossworld/cw.hpp"
#include "crossworld/learners.hpp"
#include "crossworld/oracle.hpp"

using namespace crossworld;

namespace {

struct Sample {
  Matrix X;
  std::vector<double> y;
};

// y = 2 x + (0.5 + x) e on x ~ U(0, 1)
Sample heteroskedastic(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  Sample s{Matrix(n, 1), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(eng);
    s.X(i, 0) = x;
    s.y[i] = 2.0 * x + (0.5 + x) * z(eng);
  }
  return s;
}

LearnerParams small(std::uint64_t seed) {
  LearnerParams p;
  p.trees = 100;
  p.min_leaf = 20;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("pinball loss is the check function") {
  CHECK(pinball_loss(2.0, 0.9) == doctest::Approx(1.8));
  CHECK(pinball_loss(-2.0, 0.9) == doctest::Approx(0.2));
  CHECK(pinball_loss(0.0, 0.3) == 0.0);
}

TEST_CASE("uniform level grid is evenly spaced inside the unit interval") {
  const auto g = uniform_level_grid(9);
  REQUIRE(g.size() == 9);
  CHECK(g.front() == doctest::Approx(0.1));
  CHECK(g.back() == doctest::Approx(0.9));
}

TEST_CASE("learner parameters are validated") {
  LearnerParams p;
  p.trees = 0;
  CHECK_THROWS_AS(p.validate(2), ConfigError);
  p = {};
  p.mtry = 3;
  CHECK_THROWS_AS(p.validate(2), ConfigError);
  p = {};
  p.subsample = 0.0;
  CHECK_THROWS_AS(p.validate(2), ConfigError);
  CHECK(LearnerParams{}.effective_mtry(1) == 1);
  CHECK(LearnerParams{}.effective_mtry(7) == 3);
}

TEST_CASE("forest rejects empty, mismatched and non-finite training data") {
  const LearnerParams p = small(1);
  CHECK_THROWS_AS(RegressionForest::fit(Matrix(), {}, p), InputError);
  Matrix X(5, 1);
  std::vector<double> y(4, 0.0);
  CHECK_THROWS_AS(RegressionForest::fit(X, y, p), InputError);
  Sample s = heteroskedastic(100, 2);
  s.y[3] = std::nan("");
  CHECK_THROWS_AS(RegressionForest::fit(s.X, s.y, p), InputError);
}

TEST_CASE("forest fits are reproducible from the seed") {
  const Sample s = heteroskedastic(400, 3);
  const auto a = RegressionForest::fit(s.X, s.y, small(9));
  const auto b = RegressionForest::fit(s.X, s.y, small(9));
  const auto c = RegressionForest::fit(s.X, s.y, small(10));
  const Sample q = heteroskedastic(50, 4);
  CHECK(a.predict_mean(q.X, Execution::serial) == b.predict_mean(q.X, Execution::serial));
  CHECK(a.predict_mean(q.X, Execution::serial) != c.predict_mean(q.X, Execution::serial));
}

TEST_CASE("forest on a constant response predicts that constant at every level") {
  Sample s = heteroskedastic(200, 5);
  std::fill(s.y.begin(), s.y.end(), 4.25);
  const auto f = RegressionForest::fit(s.X, s.y, small(1));
  const std::vector<double> x = {0.4};
  CHECK(f.predict_mean(x) == 4.25);
  for (double v : f.predict_quantiles(x, std::vector<double>{0.05, 0.5, 0.95})) CHECK(v == 4.25);
}

TEST_CASE("single-point and batch predictions agree") {
  const Sample s = heteroskedastic(500, 6);
  const auto f = RegressionForest::fit(s.X, s.y, small(2));
  const Sample q = heteroskedastic(37, 7);
  const std::vector<double> levels = {0.1, 0.5, 0.9};
  const auto mean = f.predict_mean(q.X, Execution::serial);
  const Matrix quant = f.predict_quantiles(q.X, levels, Execution::serial);
  for (std::size_t i = 0; i < q.X.rows(); ++i) {
    CHECK(mean[i] == doctest::Approx(f.predict_mean(q.X.row(i))).epsilon(1e-12));
    const auto qi = f.predict_quantiles(q.X.row(i), levels);
    for (std::size_t k = 0; k < levels.size(); ++k) CHECK(quant(i, k) == qi[k]);
  }
}

TEST_CASE("forest quantiles are monotone in the level and track the truth") {
  const Sample s = heteroskedastic(4000, 8);
  LearnerParams p = small(3);
  p.trees = 200;
  p.min_leaf = 100;
  const auto f = RegressionForest::fit(s.X, s.y, p);
  const auto levels = uniform_level_grid(19);
  for (double x0 : {0.2, 0.5, 0.8}) {
    const std::vector<double> x = {x0};
    const auto q = f.predict_quantiles(x, levels);
    CHECK(std::is_sorted(q.begin(), q.end()));
    const double sd = 0.5 + x0;
    // 0.1 and 0.9 quantiles of N(2 x, sd^2)
    CHECK(q[1] == doctest::Approx(2.0 * x0 - 1.2816 * sd).scale(1.0).epsilon(0.3));
    CHECK(q[17] == doctest::Approx(2.0 * x0 + 1.2816 * sd).scale(1.0).epsilon(0.3));
    CHECK(f.predict_mean(x) == doctest::Approx(2.0 * x0).scale(1.0).epsilon(0.2));
  }
}

TEST_CASE("forest rejects queries of the wrong dimension and bad levels") {
  const Sample s = heteroskedastic(200, 9);
  const auto f = RegressionForest::fit(s.X, s.y, small(4));
  const std::vector<double> x2 = {0.1, 0.2};
  CHECK_THROWS_AS(f.predict_mean(x2), InputError);
  CHECK_THROWS_AS(f.predict_mean(Matrix(3, 2), Execution::serial), InputError);
  const std::vector<double> x = {0.1};
  CHECK_THROWS_AS(f.predict_quantiles(x, std::vector<double>{0.0}), ConfigError);
  CHECK_THROWS_AS(f.predict_quantiles(x, std::vector<double>{0.9, 0.1}), ConfigError);
}

TEST_CASE("arm models share one forest across both roles") {
  const Sample s = heteroskedastic(300, 10);
  const auto levels = uniform_level_grid(9);
  const ArmModels m = fit_arm_models(s.X, s.y, levels, small(5));
  REQUIRE(m.mean);
  REQUIRE(m.quantiles);
  CHECK(m.quantiles->levels() == levels);
  const std::vector<double> x = {0.3};
  const auto forest = RegressionForest::fit(s.X, s.y, small(5));
  CHECK(predict_mean(*m.mean, x) == forest.predict_mean(x));
  CHECK(predict_quantile(*m.quantiles, x, 0.5) == forest.predict_quantiles(x, std::vector<double>{0.5})[0]);
}

TEST_CASE("linear quantile regression recovers the conditional quantile lines") {
  const Sample s = heteroskedastic(3000, 11);
  const std::vector<double> levels = {0.1, 0.5, 0.9};
  const auto m = fit_linear_quantile_model(s.X, s.y, levels);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double z = normal_quantile(levels[k]);
    // q_tau(x) = 2x + (0.5 + x) z = 0.5 z + (2 + z) x
    CHECK(m->coefficients(k)[0] == doctest::Approx(0.5 * z).scale(1.0).epsilon(0.1));
    CHECK(m->coefficients(k)[1] == doctest::Approx(2.0 + z).scale(1.0).epsilon(0.15));
  }
  const std::vector<double> x = {0.5};
  const auto q = m->predict(x, std::vector<double>{0.1, 0.3, 0.9});
  CHECK(std::is_sorted(q.begin(), q.end()));
  CHECK_THROWS_AS(m->predict(x, std::vector<double>{0.05}), ConfigError);
}
