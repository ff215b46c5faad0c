#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "crossworld/errors.hpp"

namespace crossworld {

// Closed interval [lo, hi].
class Interval {
 public:
  Interval() = default;
  Interval(double lo, double hi);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double width() const noexcept { return hi_ - lo_; }
  bool contains(double y) const noexcept { return lo_ <= y && y <= hi_; }
  bool contains(const Interval& other) const noexcept {
    return lo_ <= other.lo_ && other.hi_ <= hi_;
  }

  friend bool operator==(const Interval&, const Interval&) = default;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

bool interval_contains(const Interval& interval, double y) noexcept;

// Cross-world correlation cor(Y(1), Y(0) | X = x), held constant over x.
class Rho {
 public:
  Rho() = default;
  explicit Rho(double value);

  double value() const noexcept { return value_; }
  explicit operator double() const noexcept { return value_; }

  friend bool operator==(const Rho&, const Rho&) = default;

 private:
  double value_ = 0.0;
};

/// Correlation-adjusted Euclidean distance sqrt(a^2 + b^2 - 2 rho a b).
///
/// D_0 is the Euclidean norm, D_{-1}(a, b) = a + b, D_1(a, b) = |a - b|.
/// Non-increasing in rho. An infinite width (one-sided band) yields infinity.
double d_rho(double a, double b, Rho rho);

}  // namespace crossworld
