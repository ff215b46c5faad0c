#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "crossworld/conformal.hpp"
#include "crossworld/oracle.hpp"

using namespace crossworld;

namespace {

// mu(x) = x_0, q(x, p) = x_0 + shift + z_p
class LineMean final : public MeanModel {
 public:
  std::size_t dim() const override { return 1; }
  double predict(std::span<const double> x) const override { return x[0]; }
};

class LineQuantiles final : public QuantileModel {
 public:
  explicit LineQuantiles(double shift = 0.0) : shift_(shift) {}
  std::size_t dim() const override { return 1; }
  const std::vector<double>& levels() const override { return levels_; }
  std::vector<double> predict(std::span<const double> x, std::span<const double> levels) const override {
    std::vector<double> out;
    for (double p : levels) out.push_back(x[0] + shift_ + normal_quantile(p));
    return out;
  }

 private:
  double shift_;
  std::vector<double> levels_ = {0.05, 0.95};
};

ArmModels line_models(double shift = 0.0) {
  return {std::make_shared<LineMean>(), std::make_shared<LineQuantiles>(shift)};
}

struct Cal {
  Matrix X;
  std::vector<double> y;
};

Cal draw(std::size_t n, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> z;
  Cal c{Matrix(n, 1), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    c.X(i, 0) = u(eng);
    c.y[i] = c.X(i, 0) + z(eng);
  }
  return c;
}

}  // namespace

TEST_CASE("conformal quantile picks the ceil((1 - alpha)(n + 1))-th order statistic") {
  std::vector<double> s = {5, 1, 4, 2, 3, 9, 8, 7, 6, 10};
  // n = 10, alpha = 0.1: ceil(9.9) = 10
  CHECK(conformal_quantile(s, 0.1) == 10.0);
  // alpha = 0.2: ceil(8.8) = 9
  CHECK(conformal_quantile(s, 0.2) == 9.0);
  // alpha = 0.5: ceil(5.5) = 6
  CHECK(conformal_quantile(s, 0.5) == 6.0);
  // n = 9, alpha = 0.1: (1 - 0.1) * 10 = 9 exactly
  std::vector<double> nine(s.begin(), s.begin() + 9);
  CHECK(conformal_quantile(nine, 0.1) == 9.0);
}

TEST_CASE("conformal quantile rejects calibration sets that are too small") {
  std::vector<double> s = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(conformal_quantile(s, 0.1), ConfigError);
  CHECK_THROWS_AS(conformal_quantile({}, 0.5), ConfigError);
  CHECK_THROWS_AS(conformal_quantile(s, 0.0), ConfigError);
}

TEST_CASE("two-sided band widens by the calibrated score") {
  std::mt19937_64 eng(1);
  const Cal c = draw(2000, eng);
  // quantile model shifted by +1: the score correction absorbs the bias
  const CalibratedBand band = calibrate_band(line_models(1.0), c.X, c.y, 1, 0.1);
  const std::vector<double> x = {0.0};
  const BandPoint p = band.at(x);
  CHECK(p.mean == 0.0);
  // scores max(q_lo - y, y - q_hi) with q = x + 1 -+ 1.645: quantile is the 0.1 point of that law
  CHECK(band.correction() > 0.5);
  CHECK(p.lo() <= -1.0);
  CHECK(band.level() == doctest::Approx(0.9));
  CHECK(band.side() == BandSide::two_sided);
}

TEST_CASE("correctly specified quantiles need almost no correction") {
  std::mt19937_64 eng(2);
  const Cal c = draw(20000, eng);
  const CalibratedBand band = calibrate_band(line_models(), c.X, c.y, 0, 0.1);
  CHECK(std::abs(band.correction()) < 0.03);
  const std::vector<double> x = {0.3};
  const BandPoint p = band.at(x);
  CHECK(p.lower == doctest::Approx(1.6449).epsilon(0.03));
  CHECK(p.upper == doctest::Approx(1.6449).epsilon(0.03));
}

TEST_CASE("one-sided bands are infinite on their open side") {
  std::mt19937_64 eng(3);
  const Cal c = draw(5000, eng);
  const std::vector<double> x = {0.1};
  const BandPoint up = calibrate_band(line_models(), c.X, c.y, 1, 0.05, BandSide::upper).at(x);
  CHECK(std::isinf(up.lower));
  CHECK(up.upper == doctest::Approx(1.6449).epsilon(0.05));
  const BandPoint lo = calibrate_band(line_models(), c.X, c.y, 0, 0.05, BandSide::lower).at(x);
  CHECK(std::isinf(lo.upper));
  CHECK(lo.lower == doctest::Approx(1.6449).epsilon(0.05));
}

TEST_CASE("band widths never go negative") {
  std::mt19937_64 eng(4);
  const Cal c = draw(200, eng);
  // quantiles far above the data: the lower band edge would cross the mean
  const CalibratedBand band = calibrate_band(line_models(10.0), c.X, c.y, 1, 0.2);
  for (double x0 : {-1.0, 0.0, 1.0}) {
    const std::vector<double> x = {x0};
    const BandPoint p = band.at(x);
    CHECK(p.lower >= 0.0);
    CHECK(p.upper >= 0.0);
  }
}

TEST_CASE("split-conformal coverage is at least the target on average") {
  std::mt19937_64 eng(5);
  // A deliberately wrong quantile model: conformal validity does not depend on it.
  const ArmModels m = line_models(0.7);
  const std::size_t n = 99;
  double cov = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    const Cal c = draw(n, eng);
    const CalibratedBand band = calibrate_band(m, c.X, c.y, 0, 0.2);
    const Cal t = draw(200, eng);
    const auto at = band.at(t.X);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < at.size(); ++i) hit += at[i].interval().contains(t.y[i]) ? 1 : 0;
    cov += static_cast<double>(hit) / 200.0;
  }
  cov /= reps;
  // [1 - alpha, 1 - alpha + 1 / (n + 1)] up to Monte-Carlo error ~ 0.002
  CHECK(cov >= 0.8 - 0.006);
  CHECK(cov <= 0.81 + 0.006);
}

TEST_CASE("batch and pointwise band evaluation agree") {
  std::mt19937_64 eng(6);
  const Cal c = draw(300, eng);
  const CalibratedBand band = calibrate_band(line_models(0.2), c.X, c.y, 1, 0.1);
  const auto all = band.at(c.X);
  for (std::size_t i = 0; i < c.X.rows(); ++i) {
    const BandPoint p = band.at(c.X.row(i));
    REQUIRE(all[i].lower == p.lower);
    REQUIRE(all[i].upper == p.upper);
  }
}

TEST_CASE("naive interval is the Minkowski difference") {
  const Interval d = naive_ite_interval(Interval(1.0, 4.0), Interval(-1.0, 0.5));
  CHECK(d.lo() == 0.5);
  CHECK(d.hi() == 5.0);
  CHECK(sqrt_level(0.1) == doctest::Approx(1.0 - std::sqrt(0.9)));
  CHECK(sqrt_level(0.0) == 0.0);
  CHECK_THROWS_AS(sqrt_level(1.0), ConfigError);
}

TEST_CASE("calibration input errors are reported") {
  const ArmModels m = line_models();
  CHECK_THROWS_AS(calibrate_band(m, Matrix(3, 1), std::vector<double>(2), 0, 0.1), InputError);
  CHECK_THROWS_AS(calibrate_band(m, Matrix(), std::vector<double>(), 0, 0.1), InputError);
  CHECK_THROWS_AS(calibrate_band(m, Matrix(3, 1), std::vector<double>(3), 0, 0.1), ConfigError);
  CHECK_THROWS_AS(calibrate_band(m, Matrix(30, 1), std::vector<double>(30), 0, 1.0), ConfigError);
}

TEST_CASE("fit_cqr_band uses only the arm's rows") {
  const Dataset d = gen_synthetic(600, 1, Rho(0.0), NoiseSpec{}, 3);
  const SplitPlan split = split_dataset(d, 0.5, 4);
  LearnerParams p;
  p.trees = 50;
  p.seed = 1;
  const CalibratedBand b = fit_cqr_band(d, 1, 0.1, split, p);
  CHECK(b.arm() == 1);
  const auto rows = arm_rows(d, split.train, 1);
  for (auto i : rows) REQUIRE(d.T[i] == 1);
  CHECK(rows.size() == split.train_count(d, 1));
  CHECK_THROWS_AS(fit_cqr_band(d, 2, 0.1, split, p), ConfigError);
}
