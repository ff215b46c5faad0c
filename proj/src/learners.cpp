#include "crossworld/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "crossworld/errors.hpp"
#include "crossworld/rng.hpp"

namespace crossworld {

namespace {

void check_training_data(const Matrix& X, std::span<const double> y) {
  if (X.rows() == 0 || y.empty()) throw InputError("empty training set");
  if (X.rows() != y.size()) {
    throw InputError("covariate rows (" + std::to_string(X.rows()) +
                     ") and responses (" + std::to_string(y.size()) + ") differ");
  }
  if (X.cols() == 0) throw InputError("training covariates have zero columns");
  for (double v : X.data()) {
    if (!std::isfinite(v)) throw InputError("non-finite covariate in training set");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw InputError("non-finite response in training set");
  }
}

void check_levels(std::span<const double> levels) {
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] > 0.0 && levels[k] < 1.0)) {
      throw ConfigError("quantile level must lie in (0, 1), got " +
                        std::to_string(levels[k]));
    }
    if (k > 0 && levels[k] < levels[k - 1]) {
      throw ConfigError("quantile levels must be ascending");
    }
  }
}

class ForestMeanModel final : public MeanModel {
 public:
  explicit ForestMeanModel(std::shared_ptr<const RegressionForest> forest)
      : forest_(std::move(forest)) {}
  std::size_t dim() const override { return forest_->dim(); }
  double predict(std::span<const double> x) const override {
    return forest_->predict_mean(x);
  }
  std::vector<double> predict_batch(const Matrix& X) const override {
    return forest_->predict_mean(X, Execution::parallel);
  }

 private:
  std::shared_ptr<const RegressionForest> forest_;
};

class ForestQuantileModel final : public QuantileModel {
 public:
  ForestQuantileModel(std::shared_ptr<const RegressionForest> forest,
                      std::vector<double> levels)
      : forest_(std::move(forest)), levels_(std::move(levels)) {}
  std::size_t dim() const override { return forest_->dim(); }
  const std::vector<double>& levels() const override { return levels_; }
  std::vector<double> predict(std::span<const double> x,
                              std::span<const double> levels) const override {
    return forest_->predict_quantiles(x, levels);
  }
  Matrix predict_batch(const Matrix& X, std::span<const double> levels) const override {
    return forest_->predict_quantiles(X, levels, Execution::parallel);
  }

 private:
  std::shared_ptr<const RegressionForest> forest_;
  std::vector<double> levels_;
};

}  // namespace

std::vector<double> MeanModel::predict_batch(const Matrix& X) const {
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i));
  return out;
}

Matrix QuantileModel::predict_batch(const Matrix& X, std::span<const double> levels) const {
  Matrix out(X.rows(), levels.size());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto q = predict(X.row(i), levels);
    std::copy(q.begin(), q.end(), out.row(i).begin());
  }
  return out;
}

std::size_t LearnerParams::effective_mtry(std::size_t d) const {
  if (mtry != 0) return mtry;
  return std::max<std::size_t>(1, (d + 2) / 3);
}

void LearnerParams::validate(std::size_t d) const {
  if (trees < 1) throw ConfigError("trees must be >= 1");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  const std::size_t m = effective_mtry(d);
  if (m < 1 || m > d) {
    throw ConfigError("mtry must lie in [1, " + std::to_string(d) + "], got " +
                      std::to_string(m));
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) {
    throw ConfigError("subsample must lie in (0, 1]");
  }
}

// ---------------------------------------------------------------------------
// RegressionForest

RegressionForest RegressionForest::fit(const Matrix& X, std::span<const double> y,
                                       const LearnerParams& params, Execution exec) {
  check_training_data(X, y);
  params.validate(X.cols());
  if (X.rows() < 2 * params.min_leaf) {
    throw InputError("need at least 2 * min_leaf = " + std::to_string(2 * params.min_leaf) +
                     " training rows, got " + std::to_string(X.rows()));
  }

  RegressionForest forest;
  forest.dim_ = X.cols();

  const std::size_t n = y.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return y[a] < y[b]; });
  forest.y_sorted_.resize(n);
  std::vector<std::uint32_t> rank_of(n);
  for (std::size_t r = 0; r < n; ++r) {
    forest.y_sorted_[r] = y[order[r]];
    rank_of[order[r]] = static_cast<std::uint32_t>(r);
  }

  std::vector<std::vector<std::uint32_t>> feature_order(X.cols());
  for (std::size_t f = 0; f < X.cols(); ++f) {
    auto& o = feature_order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0U);
    std::stable_sort(o.begin(), o.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
  }

  const auto num_trees = static_cast<std::int64_t>(params.trees);
  forest.trees_.resize(params.trees);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t t = 0; t < num_trees; ++t) {
      forest.trees_[t] = grow_tree(X, y, rank_of, feature_order, params,
                                   derive_seed(params.seed, "tree", static_cast<std::uint64_t>(t)));
    }
  } else {
    for (std::int64_t t = 0; t < num_trees; ++t) {
      forest.trees_[t] = grow_tree(X, y, rank_of, feature_order, params,
                                   derive_seed(params.seed, "tree", static_cast<std::uint64_t>(t)));
    }
  }
  return forest;
}

RegressionForest::Tree RegressionForest::grow_tree(
    const Matrix& X, std::span<const double> y, std::span<const std::uint32_t> rank_of,
    std::span<const std::vector<std::uint32_t>> feature_order, const LearnerParams& params,
    std::uint64_t seed) {
  Engine eng(seed);
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  const std::size_t mtry = params.effective_mtry(d);
  const auto m = std::max<std::size_t>(
      2 * params.min_leaf,
      static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))));

  std::vector<std::uint32_t> count(n, 0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
  for (std::size_t k = 0; k < m; ++k) ++count[pick(eng)];

  // sorted[f] lists the bootstrap sample (with multiplicity) ordered by
  // feature f. Every node owns the same [begin, end) range in each list.
  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    sorted[f].reserve(m);
    for (const std::uint32_t row : feature_order[f]) {
      for (std::uint32_t c = 0; c < count[row]; ++c) sorted[f].push_back(row);
    }
  }

  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), std::size_t{0});
  std::vector<char> goes_left(n, 0);
  std::vector<std::uint32_t> scratch(m);

  Tree tree;
  tree.leaf_ranks.reserve(m);
  struct Work {
    std::int32_t node;
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, 0, m, 0});

  while (!stack.empty()) {
    const Work w = stack.back();
    stack.pop_back();
    const std::size_t size = w.end - w.begin;
    const auto& base = sorted[0];

    double sum = 0.0;
    bool pure = true;
    const double first = y[base[w.begin]];
    for (std::size_t i = w.begin; i < w.end; ++i) {
      const double v = y[base[i]];
      sum += v;
      pure = pure && v == first;
    }

    bool split = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    const bool depth_ok = params.max_depth == 0 || w.depth < params.max_depth;
    if (!pure && depth_ok && size >= 2 * params.min_leaf) {
      const double parent_score = sum * sum / static_cast<double>(size);
      double best_score = parent_score * (1.0 + 1e-12) + 1e-12;
      // Partial Fisher-Yates: the first mtry entries become the candidates.
      for (std::size_t k = 0; k < mtry; ++k) {
        std::uniform_int_distribution<std::size_t> swap_with(k, d - 1);
        std::swap(features[k], features[swap_with(eng)]);
      }
      for (std::size_t k = 0; k < mtry; ++k) {
        const std::size_t f = features[k];
        const auto& list = sorted[f];
        double left_sum = 0.0;
        for (std::size_t i = w.begin; i + 1 < w.end; ++i) {
          left_sum += y[list[i]];
          const std::size_t left_n = i + 1 - w.begin;
          const std::size_t right_n = size - left_n;
          if (left_n < params.min_leaf) continue;
          if (right_n < params.min_leaf) break;
          const double lo = X(list[i], f);
          const double hi = X(list[i + 1], f);
          if (!(lo < hi)) continue;
          const double right_sum = sum - left_sum;
          const double score = left_sum * left_sum / static_cast<double>(left_n) +
                               right_sum * right_sum / static_cast<double>(right_n);
          if (score > best_score) {
            best_score = score;
            best_feature = f;
            double mid = lo + (hi - lo) / 2.0;
            if (!(mid < hi)) mid = lo;
            best_threshold = mid;
            split = true;
          }
        }
      }
    }

    if (split) {
      std::size_t left_count = 0;
      for (std::size_t i = w.begin; i < w.end; ++i) {
        const std::uint32_t row = base[i];
        const bool left = X(row, best_feature) <= best_threshold;
        goes_left[row] = left ? 1 : 0;
        left_count += left ? 1 : 0;
      }
      // Stable partition keeps every list sorted within both children.
      for (std::size_t f = 0; f < d; ++f) {
        auto& list = sorted[f];
        std::size_t l = w.begin;
        std::size_t r = 0;
        for (std::size_t i = w.begin; i < w.end; ++i) {
          const std::uint32_t row = list[i];
          if (goes_left[row]) {
            list[l++] = row;
          } else {
            scratch[r++] = row;
          }
        }
        std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(r),
                  list.begin() + static_cast<std::ptrdiff_t>(l));
      }
      const std::size_t mid = w.begin + left_count;
      const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      Node& node = tree.nodes[w.node];
      node.feature = static_cast<std::int32_t>(best_feature);
      node.threshold = best_threshold;
      node.left = left_id;
      node.right = left_id + 1;
      stack.push_back({left_id + 1, mid, w.end, w.depth + 1});
      stack.push_back({left_id, w.begin, mid, w.depth + 1});
    } else {
      Node& node = tree.nodes[w.node];
      node.value = sum / static_cast<double>(size);
      node.leaf_begin = static_cast<std::uint32_t>(tree.leaf_ranks.size());
      for (std::size_t i = w.begin; i < w.end; ++i) {
        tree.leaf_ranks.push_back(rank_of[base[i]]);
      }
      node.leaf_end = static_cast<std::uint32_t>(tree.leaf_ranks.size());
      // A leaf routes to itself, so traversal can run a fixed number of steps.
      node.feature = 0;
      node.threshold = std::numeric_limits<double>::infinity();
      node.left = w.node;
      node.right = w.node;
      tree.depth = std::max(tree.depth, w.depth);
    }
  }
  return tree;
}

void RegressionForest::check_dim(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw InputError("query has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(dim_));
  }
}

std::size_t RegressionForest::descend(const Tree& tree, const double* x) {
  // Children are stored adjacently (right == left + 1) and leaves point to
  // themselves, so `depth` steps always end on the leaf.
  std::int32_t k = 0;
  for (std::size_t step = 0; step < tree.depth; ++step) {
    const Node& nd = tree.nodes[static_cast<std::size_t>(k)];
    k = nd.left + static_cast<std::int32_t>(x[nd.feature] > nd.threshold);
  }
  return static_cast<std::size_t>(k);
}

const RegressionForest::Node& RegressionForest::find_leaf(const Tree& tree,
                                                          std::span<const double> x) const {
  return tree.nodes[descend(tree, x.data())];
}

double RegressionForest::predict_mean(std::span<const double> x) const {
  check_dim(x);
  double acc = 0.0;
  for (const auto& tree : trees_) acc += find_leaf(tree, x).value;
  return acc / static_cast<double>(trees_.size());
}

void RegressionForest::quantiles_into(std::span<const double> x,
                                      std::span<const double> levels,
                                      std::vector<double>& weights,
                                      std::span<double> out) const {
  check_dim(x);
  weights.assign(y_sorted_.size(), 0.0);
  for (const auto& tree : trees_) {
    const Node& leaf = find_leaf(tree, x);
    const double w = 1.0 / static_cast<double>(leaf.leaf_end - leaf.leaf_begin);
    for (std::uint32_t k = leaf.leaf_begin; k < leaf.leaf_end; ++k) {
      weights[tree.leaf_ranks[k]] += w;
    }
  }
  const double total = static_cast<double>(trees_.size());
  double cum = 0.0;
  std::size_t level = 0;
  const std::size_t last = y_sorted_.size() - 1;
  for (std::size_t r = 0; r <= last && level < levels.size(); ++r) {
    cum += weights[r];
    while (level < levels.size() && (cum >= levels[level] * total * (1.0 - 1e-12) || r == last)) {
      out[level++] = y_sorted_[r];
    }
  }
  // Guard against rounding in the cumulative sum.
  for (; level < levels.size(); ++level) out[level] = y_sorted_[last];
  std::sort(out.begin(), out.end());
}

std::vector<double> RegressionForest::predict_quantiles(std::span<const double> x,
                                                        std::span<const double> levels) const {
  check_levels(levels);
  std::vector<double> weights;
  std::vector<double> out(levels.size());
  quantiles_into(x, levels, weights, out);
  return out;
}

void RegressionForest::mean_block(const Matrix& X, std::size_t begin, std::size_t end,
                                  std::span<double> out) const {
  // Tree-major traversal keeps each tree hot in cache; every row still sums
  // its trees in index order, matching predict_mean(x) bit for bit.
  for (std::size_t i = begin; i < end; ++i) out[i] = 0.0;
  constexpr std::size_t kLanes = 8;
  for (const auto& tree : trees_) {
    std::size_t i = begin;
    for (; i + kLanes <= end; i += kLanes) {
      // Independent lanes overlap the dependent loads of each descent.
      std::int32_t k[kLanes] = {};
      for (std::size_t step = 0; step < tree.depth; ++step) {
        for (std::size_t j = 0; j < kLanes; ++j) {
          const Node& nd = tree.nodes[static_cast<std::size_t>(k[j])];
          k[j] = nd.left + static_cast<std::int32_t>(X(i + j, static_cast<std::size_t>(nd.feature)) >
                                                     nd.threshold);
        }
      }
      for (std::size_t j = 0; j < kLanes; ++j) out[i + j] += tree.nodes[static_cast<std::size_t>(k[j])].value;
    }
    for (; i < end; ++i) out[i] += find_leaf(tree, X.row(i)).value;
  }
  const double t = static_cast<double>(trees_.size());
  for (std::size_t i = begin; i < end; ++i) out[i] /= t;
}

std::vector<double> RegressionForest::predict_mean(const Matrix& X, Execution exec) const {
  if (X.cols() != dim_) {
    throw InputError("query has dimension " + std::to_string(X.cols()) + ", model expects " +
                     std::to_string(dim_));
  }
  constexpr std::size_t kBlock = 256;
  std::vector<double> out(X.rows());
  const auto blocks = static_cast<std::int64_t>((X.rows() + kBlock - 1) / kBlock);
  auto run = [&](std::int64_t b) {
    const auto begin = static_cast<std::size_t>(b) * kBlock;
    mean_block(X, begin, std::min(X.rows(), begin + kBlock), out);
  };
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  } else {
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  }
  return out;
}

Matrix RegressionForest::predict_quantiles(const Matrix& X, std::span<const double> levels,
                                           Execution exec) const {
  check_levels(levels);
  if (X.cols() != dim_) {
    throw InputError("query has dimension " + std::to_string(X.cols()) + ", model expects " +
                     std::to_string(dim_));
  }
  const auto rows = static_cast<std::int64_t>(X.rows());
  Matrix out(X.rows(), levels.size());
  if (exec == Execution::parallel) {
#pragma omp parallel
    {
      std::vector<double> weights;
#pragma omp for schedule(static)
      for (std::int64_t i = 0; i < rows; ++i) quantiles_into(X.row(i), levels, weights, out.row(i));
    }
  } else {
    std::vector<double> weights;
    for (std::int64_t i = 0; i < rows; ++i) quantiles_into(X.row(i), levels, weights, out.row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forest-backed models

QuantileModelPtr fit_quantile_model(const Matrix& X, std::span<const double> y,
                                    std::span<const double> levels,
                                    const LearnerParams& params, Execution exec) {
  if (levels.empty()) throw ConfigError("at least one quantile level is required");
  check_levels(levels);
  auto forest = std::make_shared<const RegressionForest>(RegressionForest::fit(X, y, params, exec));
  return std::make_shared<ForestQuantileModel>(std::move(forest),
                                               std::vector<double>(levels.begin(), levels.end()));
}

double predict_quantile(const QuantileModel& model, std::span<const double> x, double level) {
  const double lv[1] = {level};
  return model.predict(x, lv).front();
}

MeanModelPtr fit_mean_model(const Matrix& X, std::span<const double> y,
                            const LearnerParams& params, Execution exec) {
  auto forest = std::make_shared<const RegressionForest>(RegressionForest::fit(X, y, params, exec));
  return std::make_shared<ForestMeanModel>(std::move(forest));
}

double predict_mean(const MeanModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw InputError("query has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(model.dim()));
  }
  return model.predict(x);
}

ArmModels fit_arm_models(const Matrix& X, std::span<const double> y,
                         std::span<const double> levels, const LearnerParams& params,
                         Execution exec) {
  check_levels(levels);
  auto forest = std::make_shared<const RegressionForest>(RegressionForest::fit(X, y, params, exec));
  return {std::make_shared<ForestMeanModel>(forest),
          std::make_shared<ForestQuantileModel>(forest,
                                                std::vector<double>(levels.begin(), levels.end()))};
}

// ---------------------------------------------------------------------------
// Linear pinball regression

double pinball_loss(double residual, double q) noexcept {
  return residual >= 0.0 ? q * residual : (q - 1.0) * residual;
}

namespace {

// argmin_delta sum_i w_i * rho_{q_i}(t_i - delta); the subgradient is
// W(delta) - sum_i w_i q_i with W the weight of points strictly below delta,
// so the minimizer is the first sorted t whose cumulative weight reaches it.
double weighted_check_minimizer(std::vector<std::pair<double, double>>& tw, double target) {
  std::sort(tw.begin(), tw.end());
  double cum = 0.0;
  for (const auto& [t, w] : tw) {
    cum += w;
    if (cum >= target) return t;
  }
  return tw.back().first;
}

std::vector<double> fit_linear_level(const Matrix& X, std::span<const double> y, double q,
                                     std::size_t max_sweeps) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols() + 1;
  auto feature = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : X(i, j - 1); };

  std::vector<double> coef(p, 0.0);
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  coef[0] = sorted[std::clamp<std::size_t>(k, 1, n) - 1];

  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - coef[0];

  double scale = 0.0;
  for (double v : y) scale = std::max(scale, std::abs(v));
  const double tol = 1e-10 * (1.0 + scale);

  std::vector<std::pair<double, double>> tw;
  tw.reserve(n);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      tw.clear();
      double target = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double z = feature(i, j);
        if (z == 0.0) continue;
        const double partial = resid[i] + coef[j] * z;
        const double w = std::abs(z);
        tw.emplace_back(partial / z, w);
        target += w * (z > 0.0 ? q : 1.0 - q);
      }
      if (tw.empty()) continue;
      const double updated = weighted_check_minimizer(tw, target);
      const double delta = updated - coef[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * feature(i, j);
        coef[j] = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < tol) break;
  }
  return coef;
}

}  // namespace

LinearQuantileModel::LinearQuantileModel(std::vector<double> levels,
                                         std::vector<std::vector<double>> coefficients)
    : levels_(std::move(levels)), coef_(std::move(coefficients)) {
  if (levels_.empty() || levels_.size() != coef_.size()) {
    throw ConfigError("linear quantile model needs one coefficient vector per level");
  }
  check_levels(levels_);
  dim_ = coef_.front().size() - 1;
}

std::vector<double> LinearQuantileModel::predict(std::span<const double> x,
                                                 std::span<const double> levels) const {
  if (x.size() != dim_) {
    throw InputError("query has dimension " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(dim_));
  }
  check_levels(levels);
  std::vector<double> fitted(levels_.size());
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    double v = coef_[k][0];
    for (std::size_t j = 0; j < dim_; ++j) v += coef_[k][j + 1] * x[j];
    fitted[k] = v;
  }
  std::sort(fitted.begin(), fitted.end());  // monotone rearrangement

  std::vector<double> out(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double level = levels[k];
    const auto it = std::lower_bound(levels_.begin(), levels_.end(), level);
    if (it != levels_.end() && *it == level) {
      out[k] = fitted[static_cast<std::size_t>(it - levels_.begin())];
      continue;
    }
    if (it == levels_.begin() || it == levels_.end()) {
      throw ConfigError("level " + std::to_string(level) + " outside fitted range");
    }
    const auto hi = static_cast<std::size_t>(it - levels_.begin());
    const std::size_t lo = hi - 1;
    const double frac = (level - levels_[lo]) / (levels_[hi] - levels_[lo]);
    out[k] = fitted[lo] + frac * (fitted[hi] - fitted[lo]);
  }
  return out;
}

std::shared_ptr<const LinearQuantileModel> fit_linear_quantile_model(
    const Matrix& X, std::span<const double> y, std::span<const double> levels,
    std::size_t max_sweeps) {
  check_training_data(X, y);
  if (levels.empty()) throw ConfigError("at least one quantile level is required");
  check_levels(levels);
  std::vector<std::vector<double>> coef;
  coef.reserve(levels.size());
  for (double q : levels) coef.push_back(fit_linear_level(X, y, q, max_sweeps));
  return std::make_shared<LinearQuantileModel>(std::vector<double>(levels.begin(), levels.end()),
                                               std::move(coef));
}

}  // namespace crossworld
