#include "crossworld/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "crossworld/errors.hpp"

namespace crossworld {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("per-arm miscoverage must lie in (0, 1), got " + std::to_string(alpha));
  }
}

}  // namespace

CalibratedBand::CalibratedBand(int arm, double alpha_arm, BandSide side, double correction,
                               MeanModelPtr mean, QuantileModelPtr quantiles)
    : arm_(arm),
      alpha_(alpha_arm),
      side_(side),
      correction_(correction),
      mean_(std::move(mean)),
      quantiles_(std::move(quantiles)) {
  check_alpha(alpha_arm);
  if (!mean_ || !quantiles_) throw ConfigError("band requires mean and quantile models");
}

std::vector<double> CalibratedBand::quantile_levels() const {
  switch (side_) {
    case BandSide::two_sided: return {alpha_ / 2.0, 1.0 - alpha_ / 2.0};
    case BandSide::upper: return {1.0 - alpha_};
    case BandSide::lower: return {alpha_};
  }
  return {};
}

BandPoint CalibratedBand::assemble(double mean, std::span<const double> q) const {
  BandPoint p;
  p.mean = mean;
  switch (side_) {
    case BandSide::two_sided:
      p.lower = std::max(0.0, mean - q[0] + correction_);
      p.upper = std::max(0.0, q[1] - mean + correction_);
      break;
    case BandSide::upper:
      p.lower = kInf;
      p.upper = std::max(0.0, q[0] - mean + correction_);
      break;
    case BandSide::lower:
      p.lower = std::max(0.0, mean - q[0] + correction_);
      p.upper = kInf;
      break;
  }
  return p;
}

BandPoint CalibratedBand::at(std::span<const double> x) const {
  const auto levels = quantile_levels();
  const auto q = quantiles_->predict(x, levels);
  return assemble(predict_mean(*mean_, x), q);
}

std::vector<BandPoint> CalibratedBand::at(const Matrix& X) const {
  const auto levels = quantile_levels();
  const Matrix q = quantiles_->predict_batch(X, levels);
  const auto mu = mean_->predict_batch(X);
  std::vector<BandPoint> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = assemble(mu[i], q.row(i));
  return out;
}

double conformal_quantile(std::vector<double> scores, double alpha) {
  check_alpha(alpha);
  const std::size_t n = scores.size();
  // The small offset keeps products like 0.9 * 10 from rounding up past an integer.
  const double pos = (1.0 - alpha) * static_cast<double>(n + 1);
  const auto k = static_cast<std::size_t>(std::ceil(pos - 1e-9));
  if (k > n || n == 0) {
    throw ConfigError("calibration set of " + std::to_string(n) +
                      " points is too small for miscoverage " + std::to_string(alpha) +
                      " (order statistic " + std::to_string(k) + " required)");
  }
  const std::size_t idx = std::max<std::size_t>(k, 1) - 1;
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(idx), scores.end());
  return scores[idx];
}

CalibratedBand calibrate_band(const ArmModels& models, const Matrix& X_cal,
                              std::span<const double> y_cal, int arm, double alpha_arm,
                              BandSide side) {
  check_alpha(alpha_arm);
  if (X_cal.rows() != y_cal.size()) throw InputError("calibration rows and responses differ");
  if (y_cal.empty()) throw InputError("arm " + std::to_string(arm) + " has no calibration units");

  std::vector<double> levels;
  switch (side) {
    case BandSide::two_sided: levels = {alpha_arm / 2.0, 1.0 - alpha_arm / 2.0}; break;
    case BandSide::upper: levels = {1.0 - alpha_arm}; break;
    case BandSide::lower: levels = {alpha_arm}; break;
  }
  const Matrix q = models.quantiles->predict_batch(X_cal, levels);
  std::vector<double> scores(y_cal.size());
  for (std::size_t i = 0; i < y_cal.size(); ++i) {
    switch (side) {
      case BandSide::two_sided: scores[i] = std::max(q(i, 0) - y_cal[i], y_cal[i] - q(i, 1)); break;
      case BandSide::upper: scores[i] = y_cal[i] - q(i, 0); break;
      case BandSide::lower: scores[i] = q(i, 0) - y_cal[i]; break;
    }
  }
  const double correction = conformal_quantile(std::move(scores), alpha_arm);
  return {arm, alpha_arm, side, correction, models.mean, models.quantiles};
}

std::vector<std::size_t> arm_rows(const Dataset& data, std::span<const std::size_t> idx, int arm) {
  std::vector<std::size_t> out;
  for (auto i : idx) {
    if (data.T[i] == arm) out.push_back(i);
  }
  return out;
}

CalibratedBand fit_cqr_band(const Dataset& data, int arm, double alpha_arm,
                            const SplitPlan& split, const LearnerParams& params, BandSide side) {
  check_alpha(alpha_arm);
  if (arm != 0 && arm != 1) throw ConfigError("arm must be 0 or 1");
  const auto train = arm_rows(data, split.train, arm);
  const auto cal = arm_rows(data, split.calibration, arm);
  if (train.empty() || cal.empty()) {
    throw InputError("arm " + std::to_string(arm) + " has no units in the train or calibration split");
  }
  // Fail on an undersized calibration set before paying for the fit.
  const auto k = static_cast<std::size_t>(
      std::ceil((1.0 - alpha_arm) * static_cast<double>(cal.size() + 1) - 1e-9));
  if (k > cal.size()) {
    throw ConfigError("calibration set of " + std::to_string(cal.size()) +
                      " points is too small for miscoverage " + std::to_string(alpha_arm));
  }
  const Matrix X_train = data.X.select_rows(train);
  const auto y_train = select<double>(data.Y, train);
  const std::vector<double> levels = {alpha_arm / 2.0, alpha_arm, 1.0 - alpha_arm,
                                      1.0 - alpha_arm / 2.0};
  const ArmModels models = fit_arm_models(X_train, y_train, levels, params);
  const Matrix X_cal = data.X.select_rows(cal);
  const auto y_cal = select<double>(data.Y, cal);
  return calibrate_band(models, X_cal, y_cal, arm, alpha_arm, side);
}

Interval naive_ite_interval(const Interval& c1, const Interval& c0) {
  return {c1.lo() - c0.hi(), c1.hi() - c0.lo()};
}

Interval naive_ite_interval(const CalibratedBand& band1, const CalibratedBand& band0,
                            std::span<const double> x) {
  return naive_ite_interval(band1.at(x).interval(), band0.at(x).interval());
}

double sqrt_level(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
  return 1.0 - std::sqrt(1.0 - alpha);
}

}  // namespace crossworld
