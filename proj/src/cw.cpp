#include "crossworld/cw.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crossworld/errors.hpp"
#include "crossworld/oracle.hpp"
#include "crossworld/rng.hpp"

namespace crossworld {

CRule CRule::fixed(double c) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw ConfigError("c must lie in [0, 1], got " + std::to_string(c));
  }
  return {Kind::fixed, c};
}

double CRule::effective(Rho rho) const {
  const double half = (1.0 + rho.value()) / 2.0;
  switch (kind) {
    case Kind::quadratic: return half * half;
    case Kind::linear: return half;
    case Kind::fixed: return value;
  }
  return 0.0;
}

std::string CRule::label() const {
  switch (kind) {
    case Kind::quadratic: return "auto";
    case Kind::linear: return "linear";
    case Kind::fixed: return std::to_string(value);
  }
  return "?";
}

CRule parse_c_rule(const std::string& text) {
  if (text == "auto" || text == "quadratic") return CRule::automatic();
  if (text == "linear") return CRule::linear_rule();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("c must be 'auto', 'linear' or a number in [0, 1], got '" + text + "'");
  }
  return CRule::fixed(v);
}

void CWConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  if (B < 50) throw ConfigError("bootstrap count must be >= 50");
  if (c.kind == CRule::Kind::fixed) CRule::fixed(c.value);
}

Interval cw_interval(double tau_hat, const BandPoint& band1, const BandPoint& band0, Rho rho) {
  const double below = d_rho(band1.lower, band0.upper, rho);
  const double above = d_rho(band0.lower, band1.upper, rho);
  return {tau_hat - below, tau_hat + above};
}

Interval cw_ci_interval(double tau_hat, double r_lower, double r_upper, const BandPoint& band1,
                        const BandPoint& band0, Rho rho, double c) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw ConfigError("c must lie in [0, 1], got " + std::to_string(c));
  }
  if (!(r_lower >= 0.0) || !(r_upper >= 0.0)) {
    throw DomainError("CI radii must be nonnegative");
  }
  const Interval base = cw_interval(tau_hat, band1, band0, rho);
  return {base.lo() - c * r_lower, base.hi() + c * r_upper};
}

Interval cw_ci_interval(const CateEstimate& cate, std::size_t i, const BandPoint& band1,
                        const BandPoint& band0, Rho rho, double c) {
  return cw_ci_interval(cate.point.at(i), cate.r_lower.at(i), cate.r_upper.at(i), band1, band0,
                        rho, c);
}

Rho misspecify_rho(Rho rho_true, double delta) {
  return Rho(std::clamp(rho_true.value() - delta, -1.0, 1.0));
}

std::vector<double> uniform_level_grid(std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    out[k] = static_cast<double>(k + 1) / static_cast<double>(count + 1);
  }
  return out;
}

namespace {

constexpr std::size_t kMinGrid = 9;
constexpr std::size_t kMinSamples = 1000;

void check_cmc(const QuantileModel& q1, const QuantileModel& q0, double alpha, std::size_t M) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (M < kMinSamples) throw ConfigError("Monte-Carlo sample count must be >= 1000");
  if (q1.levels().size() < kMinGrid || q0.levels().size() < kMinGrid) {
    throw ConfigError("Monte-Carlo convolution needs quantile models on at least 9 levels");
  }
  if (q1.dim() != q0.dim()) throw InputError("quantile models disagree on dimension");
}

double interpolate(std::span<const double> levels, std::span<const double> values, double u) {
  if (u <= levels.front()) return values.front();
  if (u >= levels.back()) return values.back();
  const auto it = std::upper_bound(levels.begin(), levels.end(), u);
  const auto hi = static_cast<std::size_t>(it - levels.begin());
  const std::size_t lo = hi - 1;
  const double frac = (u - levels[lo]) / (levels[hi] - levels[lo]);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Interval cmc_from_grid(std::span<const double> levels1, std::span<const double> values1,
                       std::span<const double> levels0, std::span<const double> values0,
                       double alpha, std::size_t M, Rho rho, std::uint64_t seed) {
  Engine eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double r = rho.value();
  const double c = std::sqrt(std::max(0.0, 1.0 - r * r));
  std::vector<double> diff(M);
  for (std::size_t m = 0; m < M; ++m) {
    const double z0 = normal(eng);
    const double z1 = r * z0 + c * normal(eng);
    diff[m] = interpolate(levels1, values1, normal_cdf(z1)) -
              interpolate(levels0, values0, normal_cdf(z0));
  }
  const auto k_lo = static_cast<std::size_t>(std::floor(alpha / 2.0 * static_cast<double>(M)));
  const auto k_hi = std::min(
      M - 1, static_cast<std::size_t>(std::ceil((1.0 - alpha / 2.0) * static_cast<double>(M))) - 1);
  auto lo_it = diff.begin() + static_cast<std::ptrdiff_t>(k_lo);
  std::nth_element(diff.begin(), lo_it, diff.end());
  const double lo = *lo_it;
  auto hi_it = diff.begin() + static_cast<std::ptrdiff_t>(k_hi);
  std::nth_element(lo_it, hi_it, diff.end());
  return {lo, std::max(lo, *hi_it)};
}

}  // namespace

Interval cmc_interval(const QuantileModel& qmodel1, const QuantileModel& qmodel0,
                      std::span<const double> x, double alpha, std::size_t M, Rho rho,
                      std::uint64_t seed) {
  check_cmc(qmodel1, qmodel0, alpha, M);
  const auto v1 = qmodel1.predict(x, qmodel1.levels());
  const auto v0 = qmodel0.predict(x, qmodel0.levels());
  return cmc_from_grid(qmodel1.levels(), v1, qmodel0.levels(), v0, alpha, M, rho, seed);
}

std::vector<Interval> cmc_intervals(const QuantileModel& qmodel1, const QuantileModel& qmodel0,
                                    const Matrix& X, double alpha, std::size_t M, Rho rho,
                                    std::uint64_t seed, Execution exec) {
  check_cmc(qmodel1, qmodel0, alpha, M);
  const Matrix v1 = qmodel1.predict_batch(X, qmodel1.levels());
  const Matrix v0 = qmodel0.predict_batch(X, qmodel0.levels());
  std::vector<Interval> out(X.rows());
  const auto rows = static_cast<std::int64_t>(X.rows());
  auto one = [&](std::int64_t i) {
    const auto ui = static_cast<std::size_t>(i);
    out[ui] = cmc_from_grid(qmodel1.levels(), v1.row(ui), qmodel0.levels(), v0.row(ui), alpha, M,
                            rho, derive_seed(seed, "cmc", ui));
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < rows; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < rows; ++i) one(i);
  }
  return out;
}

}  // namespace crossworld
