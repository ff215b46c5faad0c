#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "crossworld/cate.hpp"

using namespace crossworld;

namespace {

class ConstMean final : public MeanModel {
 public:
  ConstMean(std::size_t d, double v) : d_(d), v_(v) {}
  std::size_t dim() const override { return d_; }
  double predict(std::span<const double>) const override { return v_; }

 private:
  std::size_t d_;
  double v_;
};

LearnerParams small() {
  LearnerParams p;
  p.trees = 30;
  p.min_leaf = 10;
  p.seed = 3;
  return p;
}

Matrix grid(std::size_t m) {
  Matrix X(m, 1);
  for (std::size_t i = 0; i < m; ++i) X(i, 0) = -0.9 + 1.8 * static_cast<double>(i) / static_cast<double>(m - 1);
  return X;
}

}  // namespace

TEST_CASE("CATE estimate is the difference of arm means") {
  const ConstMean m1(2, 3.5), m0(2, 1.25);
  const std::vector<double> x = {0.0, 0.0};
  CHECK(estimate_cate(m1, m0, x) == 2.25);
  const auto v = estimate_cate(m1, m0, Matrix(4, 2));
  for (double t : v) CHECK(t == 2.25);
  CHECK_THROWS_AS(estimate_cate(m1, m0, Matrix(4, 3)), InputError);
}

TEST_CASE("percentile CI uses type-7 quantiles and clamps radii") {
  BootstrapDraws d;
  d.tau = Matrix(5, 2);
  for (std::size_t b = 0; b < 5; ++b) {
    d.tau(b, 0) = static_cast<double>(b);  // 0..4
    d.tau(b, 1) = 10.0 + static_cast<double>(b);
  }
  const CateEstimate e = percentile_ci(d, {2.0, 0.0}, 0.5);
  // quantiles at 0.25 and 0.75 of 0..4 are 1 and 3
  CHECK(e.r_lower[0] == doctest::Approx(1.0));
  CHECK(e.r_upper[0] == doctest::Approx(1.0));
  // point far below every draw: lower radius clamps to 0
  CHECK(e.r_lower[1] == 0.0);
  CHECK(e.r_upper[1] == doctest::Approx(13.0));
  CHECK(e.ci(0).lo() == doctest::Approx(1.0));
  CHECK(e.B == 5);
  CHECK_THROWS_AS(percentile_ci(d, {1.0}, 0.5), InputError);
  CHECK_THROWS_AS(percentile_ci(d, {1.0, 2.0}, 1.0), ConfigError);
}

TEST_CASE("bootstrap draws are reproducible and vary across replicates") {
  const Dataset data = gen_synthetic(600, 1, Rho(0.0), NoiseSpec{}, 7);
  BootstrapOptions o;
  o.B = 50;
  o.exec = Execution::serial;
  const auto a = bootstrap_cate_draws(data, grid(5), small(), 11, o);
  const auto b = bootstrap_cate_draws(data, grid(5), small(), 11, o);
  CHECK(a.tau == b.tau);
  CHECK(a.tau.rows() == 50);
  CHECK(a.tau(0, 2) != a.tau(1, 2));
  const auto c = bootstrap_cate_draws(data, grid(5), small(), 12, o);
  CHECK(c.tau != a.tau);
}

TEST_CASE("bootstrap CI brackets the truth for a strong, smooth effect") {
  const Dataset data = gen_synthetic(3000, 1, Rho(0.0), NoiseSpec{}, 8);
  LearnerParams p = small();
  p.min_leaf = 40;
  const Matrix X = grid(9);
  const CateEstimate e = bootstrap_cate_ci(data, X, 100, 0.1, p, 5);
  REQUIRE(e.size() == 9);
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(e.r_lower[i] >= 0.0);
    CHECK(e.r_upper[i] >= 0.0);
    CHECK(e.r_lower[i] + e.r_upper[i] > 0.0);
  }
}

TEST_CASE("pooled resampling redraws starved arms") {
  Dataset data = gen_synthetic(400, 1, Rho(0.0), NoiseSpec{}, 9);
  BootstrapOptions o;
  o.B = 50;
  o.scheme = Resampling::pooled;
  o.exec = Execution::serial;
  const auto d = bootstrap_cate_draws(data, grid(3), small(), 1, o);
  CHECK(d.tau.rows() == 50);
  // Keep only 21 treated units: with 2 * min_leaf = 20 most pooled resamples fall short.
  std::vector<std::size_t> keep = data.arm_indices(0);
  const auto treated = data.arm_indices(1);
  keep.insert(keep.end(), treated.begin(), treated.begin() + 21);
  const Dataset thin = data.subset(keep);
  const auto t = bootstrap_cate_draws(thin, grid(3), small(), 1, o);
  CHECK(t.redraws > 0);
}

TEST_CASE("bootstrap input errors") {
  const Dataset data = gen_synthetic(300, 1, Rho(0.0), NoiseSpec{}, 9);
  BootstrapOptions o;
  o.B = 10;
  CHECK_THROWS_AS(bootstrap_cate_draws(data, grid(3), small(), 1, o), ConfigError);
  o.B = 50;
  CHECK_THROWS_AS(bootstrap_cate_draws(data, Matrix(2, 2), small(), 1, o), InputError);
  LearnerParams big = small();
  big.min_leaf = 200;
  CHECK_THROWS_AS(bootstrap_cate_draws(data, grid(3), big, 1, o), InputError);
  const Dataset control = data.subset(data.arm_indices(0));
  CHECK_THROWS_AS(bootstrap_cate_draws(control, grid(3), small(), 1, o), InputError);
}
