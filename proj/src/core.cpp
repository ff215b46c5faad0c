#include "crossworld/core.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace crossworld {

Interval::Interval(double lo, double hi) : lo_(lo), hi_(hi) {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw DomainError("interval requires lo <= hi, got [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  }
}

bool interval_contains(const Interval& interval, double y) noexcept {
  return interval.contains(y);
}

Rho::Rho(double value) : value_(value) {
  if (!(value >= -1.0 && value <= 1.0)) {
    throw DomainError("rho must lie in [-1, 1], got " + std::to_string(value));
  }
}

double d_rho(double a, double b, Rho rho) {
  if (!(a >= 0.0) || !(b >= 0.0)) {
    throw DomainError("d_rho requires nonnegative widths");
  }
  if (std::isinf(a) || std::isinf(b)) {
    return std::numeric_limits<double>::infinity();
  }
  const double r = rho.value();
  const double gap = std::abs(a - b);
  if (r == 1.0) return gap;
  if (r == -1.0) return a + b;
  // (a - b)^2 + 2(1 - rho)ab keeps the radicand nonnegative and monotone in
  // rho under rounding; the clamp pins the result inside [|a - b|, a + b].
  const double radicand = gap * gap + 2.0 * (1.0 - r) * (a * b);
  return std::clamp(std::sqrt(std::max(0.0, radicand)), gap, a + b);
}

}  // namespace crossworld
