#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crossworld/core.hpp"
#include "crossworld/datagen.hpp"
#include "crossworld/learners.hpp"
#include "crossworld/matrix.hpp"

namespace crossworld {

// tau_hat(x) = mu1_hat(x) - mu0_hat(x)
double estimate_cate(const MeanModel& mean1, const MeanModel& mean0, std::span<const double> x);
std::vector<double> estimate_cate(const MeanModel& mean1, const MeanModel& mean0, const Matrix& X);

// Point estimates and CI radii at a fixed set of query points.
struct CateEstimate {
  std::vector<double> point;
  std::vector<double> r_lower;
  std::vector<double> r_upper;
  double beta = 0.1;
  std::size_t B = 0;

  std::size_t size() const noexcept { return point.size(); }
  Interval ci(std::size_t i) const { return {point[i] - r_lower[i], point[i] + r_upper[i]}; }
};

enum class Resampling {
  stratified,  // per-arm counts preserved
  pooled,      // whole-sample resampling; resamples with a starved arm are redrawn
};

struct BootstrapOptions {
  std::size_t B = 200;
  double beta = 0.1;
  Resampling scheme = Resampling::stratified;
  Execution exec = Execution::parallel;
};

// B x m matrix of bootstrap tau_hat values (row b = replicate b).
struct BootstrapDraws {
  Matrix tau;
  std::size_t redraws = 0;
};

BootstrapDraws bootstrap_cate_draws(const Dataset& data, const Matrix& x_query,
                                    const LearnerParams& params, std::uint64_t seed,
                                    const BootstrapOptions& options = {});

// Percentile CI from existing draws, radii taken around `point` and clamped at 0.
CateEstimate percentile_ci(const BootstrapDraws& draws, std::vector<double> point, double beta);

/// Percentile bootstrap CI for tau_hat at each query point. Both mean forests
/// are refitted on every resample. When `point` is omitted, tau_hat is taken
/// from forests fitted on the full data with `params`.
CateEstimate bootstrap_cate_ci(const Dataset& data, const Matrix& x_query, std::size_t B,
                               double beta, const LearnerParams& params, std::uint64_t seed,
                               std::optional<std::vector<double>> point = std::nullopt,
                               Resampling scheme = Resampling::stratified,
                               Execution exec = Execution::parallel);

}  // namespace crossworld
