#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crossworld/cate.hpp"
#include "crossworld/conformal.hpp"
#include "crossworld/core.hpp"
#include "crossworld/learners.hpp"

namespace crossworld {

// How the CI multiplier c is chosen for CW+CI.
struct CRule {
  enum class Kind { quadratic, linear, fixed };
  Kind kind = Kind::quadratic;
  double value = 0.0;  // used by Kind::fixed

  static CRule automatic() { return {Kind::quadratic, 0.0}; }
  static CRule linear_rule() { return {Kind::linear, 0.0}; }
  static CRule fixed(double c);

  // quadratic: ((1 + rho) / 2)^2, linear: (1 + rho) / 2
  double effective(Rho rho) const;
  std::string label() const;
};

CRule parse_c_rule(const std::string& text);

struct CWConfig {
  double alpha = 0.1;
  Rho rho_used{};
  CRule c = CRule::automatic();
  std::size_t B = 200;
  double beta = 0.1;

  void validate() const;
  double effective_c() const { return c.effective(rho_used); }
};

// [tau_hat - D_rho(l1, u0), tau_hat + D_rho(l0, u1)]
Interval cw_interval(double tau_hat, const BandPoint& band1, const BandPoint& band0, Rho rho);

// cw_interval widened by c * r_l below and c * r_u above.
Interval cw_ci_interval(double tau_hat, double r_lower, double r_upper, const BandPoint& band1,
                        const BandPoint& band0, Rho rho, double c);
Interval cw_ci_interval(const CateEstimate& cate, std::size_t i, const BandPoint& band1,
                        const BandPoint& band0, Rho rho, double c);

// max(-1, rho_true - delta)
Rho misspecify_rho(Rho rho_true, double delta);

// Evenly spaced levels k / (count + 1), k = 1..count.
std::vector<double> uniform_level_grid(std::size_t count);

/// Monte-Carlo convolution interval. Draws M pairs (U1, U0) from a Gaussian
/// copula with correlation rho, maps them through each arm's conditional
/// quantile function at x (linear interpolation on the model's level grid,
/// constant beyond its ends), and returns the empirical alpha/2 and
/// 1 - alpha/2 quantiles of Y1 - Y0.
Interval cmc_interval(const QuantileModel& qmodel1, const QuantileModel& qmodel0,
                      std::span<const double> x, double alpha, std::size_t M, Rho rho,
                      std::uint64_t seed);

// One interval per row of X; row i uses derive_seed(seed, "cmc", i).
std::vector<Interval> cmc_intervals(const QuantileModel& qmodel1, const QuantileModel& qmodel0,
                                    const Matrix& X, double alpha, std::size_t M, Rho rho,
                                    std::uint64_t seed, Execution exec = Execution::parallel);

}  // namespace crossworld
