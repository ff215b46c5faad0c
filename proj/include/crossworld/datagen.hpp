#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossworld/core.hpp"
#include "crossworld/matrix.hpp"
#include "crossworld/rng.hpp"

namespace crossworld {

enum class Marginal { gaussian, laplace, student_t3 };
enum class Copula { gaussian, frank, student_t };

std::string_view to_string(Marginal m) noexcept;
std::string_view to_string(Copula c) noexcept;
Marginal parse_marginal(std::string_view s);
Copula parse_copula(std::string_view s);

// Joint law of (eps0, eps1). Marginals are standardized to unit variance
// before scaling by sigma0 / sigma1. The t copula uses 3 degrees of freedom.
struct NoiseSpec {
  Marginal marginal = Marginal::gaussian;
  Copula copula = Copula::gaussian;
  Rho rho{};
  double sigma0 = 1.0;
  double sigma1 = 2.0;

  void validate() const;
  // "marginal/copula", e.g. "laplace/frank"
  std::string label() const;
};

// Parses "marginal/copula" (either part optional, defaulting to gaussian).
NoiseSpec parse_noise(std::string_view s, Rho rho, double sigma0 = 1.0, double sigma1 = 2.0);

struct DatasetMeta {
  std::optional<double> rho_true;
  std::optional<NoiseSpec> noise;
  std::optional<std::uint64_t> seed;
};

struct Dataset {
  Matrix X;
  std::vector<int> T;
  std::vector<double> Y;
  std::optional<std::vector<double>> Y0;
  std::optional<std::vector<double>> Y1;
  std::optional<std::vector<double>> tau;
  DatasetMeta meta;

  std::size_t size() const noexcept { return Y.size(); }
  std::size_t dim() const noexcept { return X.cols(); }
  bool has_counterfactuals() const noexcept { return Y0.has_value() && Y1.has_value(); }

  // Throws InputError on inconsistent lengths, non-binary T, non-finite values,
  // or Y != T*Y1 + (1-T)*Y0 when counterfactuals are present.
  void validate() const;
  Dataset subset(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> arm_indices(int arm) const;
  // Y1 - Y0; requires counterfactuals.
  std::vector<double> ite() const;
};

/// Synthetic potential-outcome process with controllable cross-world
/// correlation.
///
///   d = 1: X ~ Unif(-1, 1).
///   d > 1: X_j = Phi(Z_j), Z ~ N(0, S) with unit variances and 0.25 off-diagonal.
///   T ~ Bernoulli(pi(X)), pi(x) = (1 + |x_1|) / 4.
///   Y(0) = f0(X) + eps0, Y(1) = f0(X) + tau(X) + eps1,
///   f0(x) = beta' x with beta ~ N(0, I), tau a random cubic polynomial in
///   (x_1, x_2) (x_1 only when d = 1) with N(0, 1) coefficients, rescaled so
///   sd(tau(X)) = 2 over the covariate law.
///
/// The instance (beta, tau) is fixed at creation; `sample` draws fresh units
/// from the same instance so train and test sets share one ground truth.
class SyntheticDgp {
 public:
  static SyntheticDgp create(std::size_t d, const NoiseSpec& noise, std::uint64_t seed);

  std::size_t dim() const noexcept { return beta_.size(); }
  const NoiseSpec& noise() const noexcept { return noise_; }
  const std::vector<double>& beta() const noexcept { return beta_; }
  double tau_scale() const noexcept { return tau_scale_; }

  double f0(std::span<const double> x) const;
  double tau(std::span<const double> x) const;
  double propensity(std::span<const double> x) const;

  Matrix sample_covariates(std::size_t n, Engine& eng) const;
  Dataset sample(std::size_t n, std::uint64_t seed) const;

 private:
  NoiseSpec noise_;
  std::vector<double> beta_;
  // (power of x1, power of x2, coefficient)
  struct Monomial {
    int p1;
    int p2;
    double coef;
  };
  std::vector<Monomial> tau_terms_;
  double tau_scale_ = 1.0;
};

Dataset gen_synthetic(std::size_t n, std::size_t d, Rho rho, NoiseSpec noise,
                      std::uint64_t seed);

struct NoisePairs {
  std::vector<double> eps0;
  std::vector<double> eps1;
};

NoisePairs gen_copula_noise(const NoiseSpec& noise, std::size_t n, std::uint64_t seed);

// Frank parameter whose Kendall tau equals (2 / pi) asin(rho), the Kendall
// tau of a Gaussian copula with correlation rho. |rho| = 1 is unreachable.
double frank_theta_for_rho(Rho rho);
double frank_kendall_tau(double theta);

// Inverse CDF of the unit-variance marginal family.
double marginal_quantile(Marginal m, double u);
double marginal_cdf(Marginal m, double x);

// Shared-hidden-covariate model: eps_t = H + e_t with H, e_0, e_1 independent
// Gaussians of variance var_h, var_eps, var_eps. Covariates as in d = 1 case
// of SyntheticDgp extended to d columns of Unif(-1, 1); tau and f0 are drawn
// the same way.
Dataset gen_hidden_covariate(std::size_t n, std::size_t d, double var_h, double var_eps,
                             std::uint64_t seed);

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
  std::size_t train_count(const Dataset& data, int arm) const;
  std::size_t calibration_count(const Dataset& data, int arm) const;
};

// `ratio` is the training fraction in (0, 1).
SplitPlan split_dataset(const Dataset& data, double ratio, std::uint64_t seed,
                        bool stratify_by_arm = true);

struct CsvSchema {
  std::vector<std::string> x_columns;  // empty: every column named x<k>
  std::string t_column = "t";
  std::string y_column = "y";
  std::string y0_column = "y0";
  std::string y1_column = "y1";
  std::string tau_column = "tau";
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const Dataset& data, const std::string& path);
std::string format_double(double v);

struct CorrelationEstimate {
  double estimate = 0.0;
  std::size_t count = 0;
};

// Pearson correlation of (Y1, Y0) over rows with |X_j - center_j| <= delta
// for every j in cond_cols (0-based). Requires at least 30 rows in the window.
CorrelationEstimate estimate_conditional_correlation(const Dataset& data,
                                                     std::span<const std::size_t> cond_cols,
                                                     std::span<const double> center,
                                                     double delta);

// var(H) / (var(H) + var(eps)) for the shared-hidden-covariate model.
Rho rho_from_variance_decomposition(double var_h, double var_eps);

}  // namespace crossworld
