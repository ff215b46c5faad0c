#include "crossworld/cate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crossworld/errors.hpp"
#include "crossworld/rng.hpp"

namespace crossworld {

namespace {

constexpr std::size_t kMinReplicates = 50;

// Linear interpolation between order statistics (type 7).
double sample_quantile(std::vector<double>& v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Resample {
  std::vector<std::size_t> arm0;
  std::vector<std::size_t> arm1;
};

Resample draw_resample(const std::vector<std::size_t>& arm0, const std::vector<std::size_t>& arm1,
                       std::size_t n, Resampling scheme, std::size_t min_arm, Engine& eng,
                       std::size_t& redraws, std::size_t max_redraws) {
  Resample r;
  if (scheme == Resampling::stratified) {
    std::uniform_int_distribution<std::size_t> p0(0, arm0.size() - 1);
    std::uniform_int_distribution<std::size_t> p1(0, arm1.size() - 1);
    r.arm0.resize(arm0.size());
    r.arm1.resize(arm1.size());
    for (auto& i : r.arm0) i = arm0[p0(eng)];
    for (auto& i : r.arm1) i = arm1[p1(eng)];
    return r;
  }
  // Pooled: index k < |arm0| refers to arm0, the rest to arm1.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (true) {
    r.arm0.clear();
    r.arm1.clear();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = pick(eng);
      if (j < arm0.size()) {
        r.arm0.push_back(arm0[j]);
      } else {
        r.arm1.push_back(arm1[j - arm0.size()]);
      }
    }
    if (r.arm0.size() >= min_arm && r.arm1.size() >= min_arm) return r;
    if (++redraws > max_redraws) {
      throw ConfigError("bootstrap gave up after " + std::to_string(redraws) +
                        " resamples with an arm too small to fit");
    }
  }
}

}  // namespace

double estimate_cate(const MeanModel& mean1, const MeanModel& mean0, std::span<const double> x) {
  return predict_mean(mean1, x) - predict_mean(mean0, x);
}

std::vector<double> estimate_cate(const MeanModel& mean1, const MeanModel& mean0, const Matrix& X) {
  if (X.cols() != mean1.dim() || X.cols() != mean0.dim()) {
    throw InputError("query dimension does not match the mean models");
  }
  auto out = mean1.predict_batch(X);
  const auto m0 = mean0.predict_batch(X);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= m0[i];
  return out;
}

BootstrapDraws bootstrap_cate_draws(const Dataset& data, const Matrix& x_query,
                                    const LearnerParams& params, std::uint64_t seed,
                                    const BootstrapOptions& options) {
  if (options.B < kMinReplicates) {
    throw ConfigError("bootstrap needs B >= 50 replicates, got " + std::to_string(options.B));
  }
  if (!(options.beta > 0.0 && options.beta < 1.0)) {
    throw ConfigError("CI level beta must lie in (0, 1)");
  }
  const auto arm0 = data.arm_indices(0);
  const auto arm1 = data.arm_indices(1);
  if (arm0.empty() || arm1.empty()) {
    throw InputError("bootstrap needs both treated and control units");
  }
  if (x_query.cols() != data.dim()) throw InputError("query dimension does not match the data");
  const std::size_t min_arm = 2 * params.min_leaf;
  if (options.scheme == Resampling::stratified && (arm0.size() < min_arm || arm1.size() < min_arm)) {
    throw InputError("each arm needs at least 2 * min_leaf units for the bootstrap");
  }

  BootstrapDraws draws;
  draws.tau = Matrix(options.B, x_query.rows());
  const auto B = static_cast<std::int64_t>(options.B);
  const std::size_t max_redraws = 10 * options.B;
  std::vector<std::size_t> redraws(options.B, 0);

  auto replicate = [&](std::int64_t b) {
    const auto ub = static_cast<std::uint64_t>(b);
    Engine eng(derive_seed(seed, "resample", ub));
    const Resample r = draw_resample(arm0, arm1, data.size(), options.scheme, min_arm, eng,
                                     redraws[b], max_redraws);
    LearnerParams p = params;
    p.seed = derive_seed(seed, "forest0", ub);
    const auto f0 = RegressionForest::fit(data.X.select_rows(r.arm0), select<double>(data.Y, r.arm0),
                                          p, Execution::serial);
    p.seed = derive_seed(seed, "forest1", ub);
    const auto f1 = RegressionForest::fit(data.X.select_rows(r.arm1), select<double>(data.Y, r.arm1),
                                          p, Execution::serial);
    const auto m1 = f1.predict_mean(x_query, Execution::serial);
    const auto m0 = f0.predict_mean(x_query, Execution::serial);
    auto row = draws.tau.row(static_cast<std::size_t>(b));
    for (std::size_t i = 0; i < x_query.rows(); ++i) row[i] = m1[i] - m0[i];
  };

  if (options.exec == Execution::parallel) {
    bool failed = false;
    std::string message;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < B; ++b) {
      try {
        replicate(b);
      } catch (const std::exception& e) {
#pragma omp critical(crossworld_bootstrap_error)
        {
          failed = true;
          message = e.what();
        }
      }
    }
    if (failed) throw ConfigError(message);
  } else {
    for (std::int64_t b = 0; b < B; ++b) replicate(b);
  }
  for (auto r : redraws) draws.redraws += r;
  return draws;
}

CateEstimate percentile_ci(const BootstrapDraws& draws, std::vector<double> point, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("CI level beta must lie in (0, 1)");
  const std::size_t m = draws.tau.cols();
  const std::size_t B = draws.tau.rows();
  if (point.size() != m) throw InputError("point estimates do not match the query count");
  CateEstimate est;
  est.beta = beta;
  est.B = B;
  est.r_lower.resize(m);
  est.r_upper.resize(m);
  std::vector<double> column(B);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t b = 0; b < B; ++b) column[b] = draws.tau(b, i);
    const double lo = sample_quantile(column, beta / 2.0);
    const double hi = sample_quantile(column, 1.0 - beta / 2.0);
    est.r_lower[i] = std::max(0.0, point[i] - lo);
    est.r_upper[i] = std::max(0.0, hi - point[i]);
  }
  est.point = std::move(point);
  return est;
}

CateEstimate bootstrap_cate_ci(const Dataset& data, const Matrix& x_query, std::size_t B,
                               double beta, const LearnerParams& params, std::uint64_t seed,
                               std::optional<std::vector<double>> point, Resampling scheme,
                               Execution exec) {
  BootstrapOptions options;
  options.B = B;
  options.beta = beta;
  options.scheme = scheme;
  options.exec = exec;
  const BootstrapDraws draws = bootstrap_cate_draws(data, x_query, params, seed, options);
  if (!point) {
    const auto arm0 = data.arm_indices(0);
    const auto arm1 = data.arm_indices(1);
    const auto m0 = fit_mean_model(data.X.select_rows(arm0), select<double>(data.Y, arm0), params, exec);
    const auto m1 = fit_mean_model(data.X.select_rows(arm1), select<double>(data.Y, arm1), params, exec);
    point = estimate_cate(*m1, *m0, x_query);
  }
  return percentile_ci(draws, std::move(*point), beta);
}

}  // namespace crossworld
