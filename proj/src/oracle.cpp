#include "crossworld/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace crossworld {

namespace {

constexpr std::array<double, 6> kA = {-3.969683028665376e+01, 2.209460984245205e+02,
                                      -2.759285104469687e+02, 1.383577518672690e+02,
                                      -3.066479806614716e+01, 2.506628277459239e+00};
constexpr std::array<double, 5> kB = {-5.447609879822406e+01, 1.615858368580409e+02,
                                      -1.556989798598866e+02, 6.680131188771972e+01,
                                      -1.328068155288572e+01};
constexpr std::array<double, 6> kC = {-7.784894002430293e-03, -3.223964580411365e-01,
                                      -2.400758277161838e+00, -2.549732539343734e+00,
                                      4.374664141464968e+00,  2.938163982698783e+00};
constexpr std::array<double, 4> kD = {7.784695709041462e-03, 3.224671290700398e-01,
                                      2.445134137142996e+00, 3.754408661907416e+00};

double acklam(double p) {
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r + kA[5]) * q /
         (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r + 1.0);
}

}  // namespace

double normal_cdf(double z) noexcept {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("normal_quantile requires p in [0, 1], got " + std::to_string(p));
  }
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  if (p == 0.5) return 0.0;
  double x = acklam(p);
  // Halley refinement; the residual is taken in the smaller tail to avoid
  // cancellation near p = 1.
  const double e = p < 0.5 ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  if (pdf > 0.0) {
    const double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double GaussianPair::ite_sd() const {
  const double r = rho.value();
  const double var = sigma0 * sigma0 + sigma1 * sigma1 - 2.0 * r * sigma0 * sigma1;
  return std::sqrt(std::max(0.0, var));
}

Interval oracle_ite_interval(const GaussianPair& p, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (!(p.sigma0 > 0.0 && p.sigma1 > 0.0)) {
    throw ConfigError("Gaussian pair requires positive standard deviations");
  }
  const double half = normal_quantile(1.0 - alpha / 2.0) * p.ite_sd();
  const double center = p.mu1 - p.mu0;
  return {center - half, center + half};
}

OracleArmBounds oracle_arm_bounds(const GaussianPair& p, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("level must lie in (0, 1)");
  }
  if (!(p.sigma0 > 0.0 && p.sigma1 > 0.0)) {
    throw ConfigError("Gaussian pair requires positive standard deviations");
  }
  const double z = std::max(0.0, normal_quantile(level));
  return {{z * p.sigma0, z * p.sigma0}, {z * p.sigma1, z * p.sigma1}};
}

}  // namespace crossworld
