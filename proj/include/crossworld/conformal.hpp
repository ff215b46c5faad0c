#pragma once

#include <span>
#include <vector>

#include "crossworld/core.hpp"
#include "crossworld/datagen.hpp"
#include "crossworld/learners.hpp"
#include "crossworld/matrix.hpp"

namespace crossworld {

enum class BandSide { two_sided, upper, lower };

// A band evaluated at one x: [mean - lower, mean + upper]. A one-sided band
// has an infinite width on its open side.
struct BandPoint {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  double lo() const noexcept { return mean - lower; }
  double hi() const noexcept { return mean + upper; }
  Interval interval() const { return {lo(), hi()}; }
};

/// Split-conformal band for one treatment arm.
///
/// Two-sided (CQR): scores E_i = max(q_lo(X_i) - Y_i, Y_i - q_hi(X_i)) with
/// q_lo, q_hi at alpha/2 and 1 - alpha/2; the band is [q_lo - Q, q_hi + Q]
/// re-expressed around the mean model with widths clamped at 0.
/// One-sided upper: scores Y_i - q_{1-alpha}(X_i), band (-inf, q + Q].
/// One-sided lower: scores q_alpha(X_i) - Y_i, band [q - Q, +inf).
/// Q is the ceil((1 - alpha)(n_cal + 1))-th smallest score.
class CalibratedBand {
 public:
  CalibratedBand(int arm, double alpha_arm, BandSide side, double correction,
                 MeanModelPtr mean, QuantileModelPtr quantiles);

  int arm() const noexcept { return arm_; }
  double alpha() const noexcept { return alpha_; }
  double level() const noexcept { return 1.0 - alpha_; }
  BandSide side() const noexcept { return side_; }
  double correction() const noexcept { return correction_; }
  const MeanModelPtr& mean_model() const noexcept { return mean_; }
  const QuantileModelPtr& quantile_model() const noexcept { return quantiles_; }

  BandPoint at(std::span<const double> x) const;
  std::vector<BandPoint> at(const Matrix& X) const;

 private:
  std::vector<double> quantile_levels() const;
  BandPoint assemble(double mean, std::span<const double> q) const;

  int arm_;
  double alpha_;
  BandSide side_;
  double correction_;
  MeanModelPtr mean_;
  QuantileModelPtr quantiles_;
};

// ceil((1 - alpha)(n + 1))-th order statistic of `scores`; ConfigError when
// the index exceeds n.
double conformal_quantile(std::vector<double> scores, double alpha);

// Calibrates pre-fitted models on the given calibration rows of one arm.
CalibratedBand calibrate_band(const ArmModels& models, const Matrix& X_cal,
                              std::span<const double> y_cal, int arm, double alpha_arm,
                              BandSide side = BandSide::two_sided);

// Fits a forest on the arm's training rows and calibrates on its calibration rows.
CalibratedBand fit_cqr_band(const Dataset& data, int arm, double alpha_arm,
                            const SplitPlan& split, const LearnerParams& params,
                            BandSide side = BandSide::two_sided);

// Rows of `data` in `idx` that belong to `arm`.
std::vector<std::size_t> arm_rows(const Dataset& data, std::span<const std::size_t> idx, int arm);

// Minkowski difference C1 - C0 = [lo1 - hi0, hi1 - lo0].
Interval naive_ite_interval(const Interval& c1, const Interval& c0);
Interval naive_ite_interval(const CalibratedBand& band1, const CalibratedBand& band0,
                            std::span<const double> x);

// Per-arm miscoverage 1 - sqrt(1 - alpha) for the independent-outcomes naive variant.
double sqrt_level(double alpha);

}  // namespace crossworld
