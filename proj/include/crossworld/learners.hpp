#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "crossworld/matrix.hpp"

namespace crossworld {

enum class Execution { serial, parallel };

struct LearnerParams {
  std::size_t trees = 500;
  std::size_t min_leaf = 10;
  std::size_t mtry = 0;       // 0 selects max(1, ceil(d / 3))
  std::size_t max_depth = 0;  // 0 means unlimited
  double subsample = 1.0;     // bootstrap sample size as a fraction of n
  std::uint64_t seed = 0;

  std::size_t effective_mtry(std::size_t d) const;
  void validate(std::size_t d) const;
};

// Conditional mean estimate mu_t(x).
class MeanModel {
 public:
  virtual ~MeanModel() = default;
  virtual std::size_t dim() const = 0;
  virtual double predict(std::span<const double> x) const = 0;
  virtual std::vector<double> predict_batch(const Matrix& X) const;
};

// Conditional quantile estimates at arbitrary levels in (0, 1). Predictions
// for several levels at one x are returned non-decreasing in the level.
class QuantileModel {
 public:
  virtual ~QuantileModel() = default;
  virtual std::size_t dim() const = 0;
  virtual const std::vector<double>& levels() const = 0;
  // `levels` must be ascending.
  virtual std::vector<double> predict(std::span<const double> x,
                                      std::span<const double> levels) const = 0;
  // Row i of the result holds the quantiles of row i of X.
  virtual Matrix predict_batch(const Matrix& X, std::span<const double> levels) const;
};

using MeanModelPtr = std::shared_ptr<const MeanModel>;
using QuantileModelPtr = std::shared_ptr<const QuantileModel>;

/// Random regression forest grown with CART variance splitting.
///
/// Each leaf keeps the (bootstrap, with multiplicity) training points that
/// fell into it. The mean prediction averages the leaf means over trees; the
/// quantile prediction reads the conditional quantile off the weighted
/// empirical CDF in which a training point gets weight count / leaf size,
/// averaged over trees.
class RegressionForest {
 public:
  static RegressionForest fit(const Matrix& X, std::span<const double> y,
                              const LearnerParams& params,
                              Execution exec = Execution::parallel);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_trees() const noexcept { return trees_.size(); }
  std::size_t num_training() const noexcept { return y_sorted_.size(); }

  double predict_mean(std::span<const double> x) const;
  std::vector<double> predict_quantiles(std::span<const double> x,
                                        std::span<const double> levels) const;

  std::vector<double> predict_mean(const Matrix& X, Execution exec) const;
  Matrix predict_quantiles(const Matrix& X, std::span<const double> levels,
                           Execution exec) const;

 private:
  struct Node {
    std::int32_t feature = 0;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;           // leaf mean
    std::uint32_t leaf_begin = 0;  // range in Tree::leaf_ranks
    std::uint32_t leaf_end = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<std::uint32_t> leaf_ranks;  // positions in y_sorted_
    std::size_t depth = 0;                  // deepest leaf
  };

  static std::size_t descend(const Tree& tree, const double* x);
  const Node& find_leaf(const Tree& tree, std::span<const double> x) const;
  void quantiles_into(std::span<const double> x, std::span<const double> levels,
                      std::vector<double>& weights, std::span<double> out) const;
  void check_dim(std::span<const double> x) const;
  void mean_block(const Matrix& X, std::size_t begin, std::size_t end,
                  std::span<double> out) const;

  static Tree grow_tree(const Matrix& X, std::span<const double> y,
                        std::span<const std::uint32_t> rank_of,
                        std::span<const std::vector<std::uint32_t>> feature_order,
                        const LearnerParams& params, std::uint64_t seed);

  std::size_t dim_ = 0;
  std::vector<Tree> trees_;
  std::vector<double> y_sorted_;
};

// Quantile forest; the default learner. `levels` records the levels the
// caller intends to query, but every level in (0, 1) is available.
QuantileModelPtr fit_quantile_model(const Matrix& X, std::span<const double> y,
                                    std::span<const double> levels,
                                    const LearnerParams& params,
                                    Execution exec = Execution::parallel);

double predict_quantile(const QuantileModel& model, std::span<const double> x,
                        double level);

MeanModelPtr fit_mean_model(const Matrix& X, std::span<const double> y,
                            const LearnerParams& params,
                            Execution exec = Execution::parallel);

double predict_mean(const MeanModel& model, std::span<const double> x);

// Mean and quantile roles served by one forest.
struct ArmModels {
  MeanModelPtr mean;
  QuantileModelPtr quantiles;
};

ArmModels fit_arm_models(const Matrix& X, std::span<const double> y,
                         std::span<const double> levels, const LearnerParams& params,
                         Execution exec = Execution::parallel);

/// Linear quantile regression with intercept, one coefficient vector per level,
/// fitted by exact coordinate descent on the check loss. Intended for d <= 5.
/// Predictions between fitted levels are linearly interpolated; levels outside
/// the fitted range are rejected.
class LinearQuantileModel final : public QuantileModel {
 public:
  LinearQuantileModel(std::vector<double> levels,
                      std::vector<std::vector<double>> coefficients);

  std::size_t dim() const override { return dim_; }
  const std::vector<double>& levels() const override { return levels_; }
  std::vector<double> predict(std::span<const double> x,
                              std::span<const double> levels) const override;
  // [intercept, beta_1..beta_d] for fitted level k
  const std::vector<double>& coefficients(std::size_t k) const { return coef_[k]; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> levels_;
  std::vector<std::vector<double>> coef_;
};

std::shared_ptr<const LinearQuantileModel> fit_linear_quantile_model(
    const Matrix& X, std::span<const double> y, std::span<const double> levels,
    std::size_t max_sweeps = 200);

// Check (pinball) loss at level q.
double pinball_loss(double residual, double q) noexcept;

}  // namespace crossworld
