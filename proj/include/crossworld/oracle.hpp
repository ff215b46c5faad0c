#pragma once

#include "crossworld/core.hpp"

namespace crossworld {

// Standard normal CDF and its inverse. The inverse is Acklam's rational
// approximation refined by one Halley step; absolute error is below 1e-12
// over (1e-300, 1 - 1e-16).
double normal_cdf(double z) noexcept;
double normal_quantile(double p);

// Conditional law of (Y(1), Y(0)) given X = x in the Gaussian case.
struct GaussianPair {
  double mu0 = 0.0;
  double mu1 = 0.0;
  double sigma0 = 1.0;
  double sigma1 = 1.0;
  Rho rho{};

  // sd of Y(1) - Y(0)
  double ite_sd() const;
};

// Shortest 1 - alpha interval for Y(1) - Y(0): the alpha/2 and 1 - alpha/2
// quantiles of N(mu1 - mu0, sigma0^2 + sigma1^2 - 2 rho sigma0 sigma1).
Interval oracle_ite_interval(const GaussianPair& p, double alpha);

struct ArmWidths {
  double lower = 0.0;  // l_t
  double upper = 0.0;  // u_t
};

struct OracleArmBounds {
  ArmWidths arm0;
  ArmWidths arm1;
};

// Exact one-sided widths at `level`: l_t = u_t = z_level * sigma_t.
// Levels below 0.5 give zero width (the band cannot be narrower than the mean).
OracleArmBounds oracle_arm_bounds(const GaussianPair& p, double level);

}  // namespace crossworld
