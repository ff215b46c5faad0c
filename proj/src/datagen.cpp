#include "crossworld/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "crossworld/errors.hpp"
#include "crossworld/oracle.hpp"

namespace crossworld {

namespace {

constexpr double kTauSd = 2.0;
constexpr std::size_t kTauScaleDraws = 20000;
constexpr double kCovariateCorrelation = 0.25;
constexpr double kStudentDof = 3.0;

const boost::math::students_t_distribution<double>& t3() {
  static const boost::math::students_t_distribution<double> dist(kStudentDof);
  return dist;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string_view to_string(Marginal m) noexcept {
  switch (m) {
    case Marginal::gaussian: return "gaussian";
    case Marginal::laplace: return "laplace";
    case Marginal::student_t3: return "student_t3";
  }
  return "?";
}

std::string_view to_string(Copula c) noexcept {
  switch (c) {
    case Copula::gaussian: return "gaussian";
    case Copula::frank: return "frank";
    case Copula::student_t: return "student_t";
  }
  return "?";
}

Marginal parse_marginal(std::string_view s) {
  if (s == "gaussian" || s == "normal") return Marginal::gaussian;
  if (s == "laplace") return Marginal::laplace;
  if (s == "student_t3" || s == "t3") return Marginal::student_t3;
  throw ConfigError("unknown noise marginal '" + std::string(s) + "'");
}

Copula parse_copula(std::string_view s) {
  if (s == "gaussian" || s == "normal") return Copula::gaussian;
  if (s == "frank") return Copula::frank;
  if (s == "student_t" || s == "t") return Copula::student_t;
  throw ConfigError("unknown noise copula '" + std::string(s) + "'");
}

void NoiseSpec::validate() const {
  if (!(sigma0 > 0.0 && sigma1 > 0.0) || !std::isfinite(sigma0) || !std::isfinite(sigma1)) {
    throw ConfigError("noise scales must be positive and finite");
  }
}

std::string NoiseSpec::label() const {
  return std::string(to_string(marginal)) + "/" + std::string(to_string(copula));
}

NoiseSpec parse_noise(std::string_view s, Rho rho, double sigma0, double sigma1) {
  NoiseSpec spec;
  spec.rho = rho;
  spec.sigma0 = sigma0;
  spec.sigma1 = sigma1;
  const std::string text = trim(s);
  const auto slash = text.find('/');
  const std::string m = trim(text.substr(0, slash));
  if (!m.empty()) spec.marginal = parse_marginal(m);
  if (slash != std::string::npos) {
    const std::string c = trim(text.substr(slash + 1));
    if (!c.empty()) spec.copula = parse_copula(c);
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const {
  const std::size_t n = Y.size();
  if (X.rows() != n || T.size() != n) {
    throw InputError("dataset columns have inconsistent lengths");
  }
  for (auto* opt : {&Y0, &Y1, &tau}) {
    if (opt->has_value() && (*opt)->size() != n) {
      throw InputError("dataset columns have inconsistent lengths");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (T[i] != 0 && T[i] != 1) {
      throw InputError("row " + std::to_string(i + 1) + ": treatment must be 0 or 1");
    }
    if (!std::isfinite(Y[i])) {
      throw InputError("row " + std::to_string(i + 1) + ": non-finite outcome");
    }
    for (double v : X.row(i)) {
      if (!std::isfinite(v)) {
        throw InputError("row " + std::to_string(i + 1) + ": non-finite covariate");
      }
    }
    if (has_counterfactuals()) {
      const double expect = T[i] == 1 ? (*Y1)[i] : (*Y0)[i];
      if (expect != Y[i]) {
        throw InputError("row " + std::to_string(i + 1) +
                         ": observed outcome disagrees with T*Y1 + (1-T)*Y0");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.X = X.select_rows(idx);
  out.T = select<int>(T, idx);
  out.Y = select<double>(Y, idx);
  if (Y0) out.Y0 = select<double>(*Y0, idx);
  if (Y1) out.Y1 = select<double>(*Y1, idx);
  if (tau) out.tau = select<double>(*tau, idx);
  out.meta = meta;
  return out;
}

std::vector<std::size_t> Dataset::arm_indices(int arm) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < T.size(); ++i) {
    if (T[i] == arm) out.push_back(i);
  }
  return out;
}

std::vector<double> Dataset::ite() const {
  if (!has_counterfactuals()) throw InputError("dataset has no counterfactual outcomes");
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*Y1)[i] - (*Y0)[i];
  return out;
}

// ---------------------------------------------------------------------------
// Marginals and copulas

double marginal_quantile(Marginal m, double u) {
  switch (m) {
    case Marginal::gaussian:
      return normal_quantile(u);
    case Marginal::laplace: {
      const double b = 1.0 / std::numbers::sqrt2;
      return u < 0.5 ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
    }
    case Marginal::student_t3:
      return boost::math::quantile(t3(), u) / std::sqrt(kStudentDof / (kStudentDof - 2.0));
  }
  return 0.0;
}

double marginal_cdf(Marginal m, double x) {
  switch (m) {
    case Marginal::gaussian:
      return normal_cdf(x);
    case Marginal::laplace: {
      const double b = 1.0 / std::numbers::sqrt2;
      return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
    }
    case Marginal::student_t3:
      return boost::math::cdf(t3(), x * std::sqrt(kStudentDof / (kStudentDof - 2.0)));
  }
  return 0.0;
}

namespace {

// t/(e^t - 1), continuous at 0
double debye_integrand(double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); }

double debye1(double theta) {
  using boost::math::quadrature::gauss_kronrod;
  const double integral = gauss_kronrod<double, 61>::integrate(debye_integrand, 0.0, theta, 10, 1e-13);
  return integral / theta;
}

}  // namespace

double frank_kendall_tau(double theta) {
  if (theta == 0.0) return 0.0;
  const double a = std::abs(theta);
  const double tau = 1.0 - 4.0 / a * (1.0 - debye1(a));
  return theta > 0.0 ? tau : -tau;
}

double frank_theta_for_rho(Rho rho) {
  const double r = rho.value();
  if (std::abs(r) == 1.0) {
    throw ConfigError("Frank copula cannot reach |rho| = 1");
  }
  if (r == 0.0) return 0.0;
  const double target = std::abs(2.0 / std::numbers::pi * std::asin(r));
  double lo = 0.0;
  double hi = 1.0;
  while (frank_kendall_tau(hi) < target) {
    hi *= 2.0;
    if (hi > 1e6) throw ConfigError("Frank parameter search diverged");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (frank_kendall_tau(mid) < target ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  return r > 0.0 ? theta : -theta;
}

NoisePairs gen_copula_noise(const NoiseSpec& noise, std::size_t n, std::uint64_t seed) {
  noise.validate();
  NoisePairs out;
  out.eps0.resize(n);
  out.eps1.resize(n);
  const double r = noise.rho.value();
  Engine eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Gaussian marginals under a Gaussian copula: bivariate normal directly.
  if (noise.marginal == Marginal::gaussian && noise.copula == Copula::gaussian) {
    const double c = std::sqrt(std::max(0.0, 1.0 - r * r));
    for (std::size_t i = 0; i < n; ++i) {
      const double z0 = normal(eng);
      const double z1 = normal(eng);
      out.eps0[i] = noise.sigma0 * z0;
      out.eps1[i] = noise.sigma1 * (r * z0 + c * z1);
    }
    return out;
  }

  std::vector<double> u0(n);
  std::vector<double> u1(n);
  if (std::abs(r) == 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      u0[i] = uniform_open(eng);
      u1[i] = r > 0.0 ? u0[i] : 1.0 - u0[i];
    }
  } else {
    switch (noise.copula) {
      case Copula::gaussian: {
        const double c = std::sqrt(1.0 - r * r);
        for (std::size_t i = 0; i < n; ++i) {
          const double z0 = normal(eng);
          const double z1 = r * z0 + c * normal(eng);
          u0[i] = normal_cdf(z0);
          u1[i] = normal_cdf(z1);
        }
        break;
      }
      case Copula::student_t: {
        const double c = std::sqrt(1.0 - r * r);
        std::chi_squared_distribution<double> chi2(kStudentDof);
        for (std::size_t i = 0; i < n; ++i) {
          const double z0 = normal(eng);
          const double z1 = r * z0 + c * normal(eng);
          const double s = std::sqrt(chi2(eng) / kStudentDof);
          u0[i] = boost::math::cdf(t3(), z0 / s);
          u1[i] = boost::math::cdf(t3(), z1 / s);
        }
        break;
      }
      case Copula::frank: {
        const double theta = frank_theta_for_rho(noise.rho);
        for (std::size_t i = 0; i < n; ++i) {
          u0[i] = uniform_open(eng);
          const double w = uniform_open(eng);
          if (theta == 0.0) {
            u1[i] = w;
          } else {
            // Conditional inverse C(v | u) = w.
            const double num = w * std::expm1(-theta);
            const double den = w + (1.0 - w) * std::exp(-theta * u0[i]);
            u1[i] = -std::log1p(num / den) / theta;
          }
        }
        break;
      }
    }
  }
  // Keep uniforms strictly inside (0, 1) so the quantile maps stay finite.
  constexpr double eps = 1e-300;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::clamp(u0[i], eps, std::nextafter(1.0, 0.0));
    const double b = std::clamp(u1[i], eps, std::nextafter(1.0, 0.0));
    out.eps0[i] = noise.sigma0 * marginal_quantile(noise.marginal, a);
    out.eps1[i] = noise.sigma1 * marginal_quantile(noise.marginal, b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic process

SyntheticDgp SyntheticDgp::create(std::size_t d, const NoiseSpec& noise, std::uint64_t seed) {
  if (d < 1) throw ConfigError("dimension must be >= 1");
  noise.validate();
  SyntheticDgp dgp;
  dgp.noise_ = noise;
  Engine eng(derive_seed(seed, "coefficients"));
  std::normal_distribution<double> normal(0.0, 1.0);
  dgp.beta_.resize(d);
  for (auto& b : dgp.beta_) b = normal(eng);

  const int max_p2 = d >= 2 ? 3 : 0;
  for (int p1 = 0; p1 <= 3; ++p1) {
    for (int p2 = 0; p2 <= max_p2 && p1 + p2 <= 3; ++p2) {
      dgp.tau_terms_.push_back({p1, p2, normal(eng)});
    }
  }

  Engine scale_eng(derive_seed(seed, "tau-scale"));
  const Matrix Xs = dgp.sample_covariates(kTauScaleDraws, scale_eng);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < Xs.rows(); ++i) {
    const double v = dgp.tau(Xs.row(i));
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double sd = std::sqrt(m2 / static_cast<double>(Xs.rows() - 1));
  if (sd > 0.0) dgp.tau_scale_ = kTauSd / sd;
  return dgp;
}

double SyntheticDgp::f0(std::span<const double> x) const {
  double v = 0.0;
  for (std::size_t j = 0; j < beta_.size(); ++j) v += beta_[j] * x[j];
  return v;
}

double SyntheticDgp::tau(std::span<const double> x) const {
  const double x1 = x[0];
  const double x2 = x.size() > 1 ? x[1] : 0.0;
  double v = 0.0;
  for (const auto& m : tau_terms_) {
    v += m.coef * std::pow(x1, m.p1) * std::pow(x2, m.p2);
  }
  return tau_scale_ * v;
}

double SyntheticDgp::propensity(std::span<const double> x) const {
  return (1.0 + std::abs(x[0])) / 4.0;
}

Matrix SyntheticDgp::sample_covariates(std::size_t n, Engine& eng) const {
  const std::size_t d = dim();
  Matrix X(n, d);
  if (d == 1) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) X(i, 0) = unif(eng);
    return X;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shared = std::sqrt(kCovariateCorrelation);
  const double own = std::sqrt(1.0 - kCovariateCorrelation);
  for (std::size_t i = 0; i < n; ++i) {
    const double common = normal(eng);
    for (std::size_t j = 0; j < d; ++j) {
      X(i, j) = normal_cdf(shared * common + own * normal(eng));
    }
  }
  return X;
}

Dataset SyntheticDgp::sample(std::size_t n, std::uint64_t seed) const {
  if (n < 1) throw ConfigError("sample size must be >= 1");
  Dataset data;
  Engine cov_eng(derive_seed(seed, "covariates"));
  data.X = sample_covariates(n, cov_eng);
  const NoisePairs eps = gen_copula_noise(noise_, n, derive_seed(seed, "noise"));
  Engine treat_eng(derive_seed(seed, "treatment"));

  data.T.resize(n);
  data.Y.resize(n);
  std::vector<double> y0(n), y1(n), tau_v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.X.row(i);
    const double base = f0(x);
    tau_v[i] = tau(x);
    y0[i] = base + eps.eps0[i];
    y1[i] = base + tau_v[i] + eps.eps1[i];
    data.T[i] = uniform_open(treat_eng) < propensity(x) ? 1 : 0;
    data.Y[i] = data.T[i] == 1 ? y1[i] : y0[i];
  }
  data.Y0 = std::move(y0);
  data.Y1 = std::move(y1);
  data.tau = std::move(tau_v);
  data.meta.rho_true = noise_.rho.value();
  data.meta.noise = noise_;
  data.meta.seed = seed;
  return data;
}

Dataset gen_synthetic(std::size_t n, std::size_t d, Rho rho, NoiseSpec noise,
                      std::uint64_t seed) {
  noise.rho = rho;
  const SyntheticDgp dgp = SyntheticDgp::create(d, noise, derive_seed(seed, "dgp"));
  Dataset data = dgp.sample(n, derive_seed(seed, "sample"));
  data.meta.seed = seed;
  return data;
}

Dataset gen_hidden_covariate(std::size_t n, std::size_t d, double var_h, double var_eps,
                             std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("sample size and dimension must be >= 1");
  if (!(var_h >= 0.0 && var_eps >= 0.0) || var_h + var_eps <= 0.0) {
    throw ConfigError("variance components must be nonnegative and not both zero");
  }
  Engine eng(derive_seed(seed, "hidden-covariate"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> beta(d);
  for (auto& b : beta) b = normal(eng);
  const double slope = normal(eng);

  Dataset data;
  data.X = Matrix(n, d);
  data.T.resize(n);
  data.Y.resize(n);
  std::vector<double> y0(n), y1(n), tau_v(n);
  const double sh = std::sqrt(var_h);
  const double se = std::sqrt(var_eps);
  for (std::size_t i = 0; i < n; ++i) {
    double base = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      data.X(i, j) = unif(eng);
      base += beta[j] * data.X(i, j);
    }
    const double h = sh * normal(eng);
    tau_v[i] = 1.0 + slope * data.X(i, 0);
    y0[i] = base + h + se * normal(eng);
    y1[i] = base + tau_v[i] + h + se * normal(eng);
    data.T[i] = uniform_open(eng) < 0.5 ? 1 : 0;
    data.Y[i] = data.T[i] == 1 ? y1[i] : y0[i];
  }
  data.Y0 = std::move(y0);
  data.Y1 = std::move(y1);
  data.tau = std::move(tau_v);
  data.meta.rho_true = var_h / (var_h + var_eps);
  data.meta.seed = seed;
  return data;
}

// ---------------------------------------------------------------------------
// Splitting

std::size_t SplitPlan::train_count(const Dataset& data, int arm) const {
  return static_cast<std::size_t>(
      std::count_if(train.begin(), train.end(), [&](std::size_t i) { return data.T[i] == arm; }));
}

std::size_t SplitPlan::calibration_count(const Dataset& data, int arm) const {
  return static_cast<std::size_t>(std::count_if(
      calibration.begin(), calibration.end(), [&](std::size_t i) { return data.T[i] == arm; }));
}

SplitPlan split_dataset(const Dataset& data, double ratio, std::uint64_t seed,
                        bool stratify_by_arm) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  SplitPlan plan;
  auto split_group = [&](std::vector<std::size_t> idx, std::uint64_t group_seed) {
    Engine eng(group_seed);
    std::shuffle(idx.begin(), idx.end(), eng);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    plan.train.insert(plan.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.calibration.insert(plan.calibration.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                            idx.end());
  };
  if (stratify_by_arm) {
    for (int arm : {0, 1}) {
      auto idx = data.arm_indices(arm);
      if (idx.size() < 2) {
        throw InputError("arm " + std::to_string(arm) + " has " + std::to_string(idx.size()) +
                         " units; stratified split needs at least 2");
      }
      split_group(std::move(idx), derive_seed(seed, "split", static_cast<std::uint64_t>(arm)));
    }
  } else {
    if (data.size() < 2) throw InputError("split needs at least 2 units");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    split_group(std::move(idx), derive_seed(seed, "split"));
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.calibration.begin(), plan.calibration.end());
  for (int arm : {0, 1}) {
    if (plan.train_count(data, arm) == 0 || plan.calibration_count(data, arm) == 0) {
      throw InputError("arm " + std::to_string(arm) + " is empty in the train or calibration split");
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path + "' is empty; header row expected");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;

  auto require = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) throw InputError("'" + path + "': missing column '" + name + "'");
    return it->second;
  };
  auto optional_col = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = col.find(name);
    if (it == col.end()) return std::nullopt;
    return it->second;
  };

  std::vector<std::size_t> x_cols;
  if (!schema.x_columns.empty()) {
    for (const auto& name : schema.x_columns) x_cols.push_back(require(name));
  } else {
    for (std::size_t k = 1;; ++k) {
      const auto c = optional_col("x" + std::to_string(k));
      if (!c) break;
      x_cols.push_back(*c);
    }
    if (x_cols.empty()) throw InputError("'" + path + "': no covariate columns x1..xd");
  }
  const std::size_t t_col = require(schema.t_column);
  const std::size_t y_col = require(schema.y_column);
  const auto y0_col = optional_col(schema.y0_column);
  const auto y1_col = optional_col(schema.y1_column);
  const auto tau_col = optional_col(schema.tau_column);
  if (y0_col.has_value() != y1_col.has_value()) {
    throw InputError("'" + path + "': counterfactual columns must appear together");
  }

  std::vector<double> xs, y, y0, y1, tau;
  std::vector<int> t;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError("'" + path + "' row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    auto parse = [&](std::size_t c) {
      const std::string& f = fields[c];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw InputError("'" + path + "' row " + std::to_string(row) + ": cannot parse '" + f +
                         "' in column '" + header[c] + "'");
      }
      if (!std::isfinite(v)) {
        throw InputError("'" + path + "' row " + std::to_string(row) +
                         ": non-finite value in column '" + header[c] + "'");
      }
      return v;
    };
    for (auto c : x_cols) xs.push_back(parse(c));
    const double tv = parse(t_col);
    if (tv != 0.0 && tv != 1.0) {
      throw InputError("'" + path + "' row " + std::to_string(row) +
                       ": treatment must be 0 or 1, got " + fields[t_col]);
    }
    t.push_back(static_cast<int>(tv));
    y.push_back(parse(y_col));
    if (y0_col) {
      y0.push_back(parse(*y0_col));
      y1.push_back(parse(*y1_col));
    }
    if (tau_col) tau.push_back(parse(*tau_col));
  }
  if (y.empty()) throw InputError("'" + path + "' has no data rows");

  Dataset data;
  data.X = Matrix(y.size(), x_cols.size());
  for (std::size_t i = 0; i < data.X.rows(); ++i) {
    for (std::size_t j = 0; j < x_cols.size(); ++j) data.X(i, j) = xs[i * x_cols.size() + j];
  }
  data.T = std::move(t);
  data.Y = std::move(y);
  if (y0_col) {
    data.Y0 = std::move(y0);
    data.Y1 = std::move(y1);
  }
  if (tau_col) data.tau = std::move(tau);
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  const std::size_t d = data.dim();
  for (std::size_t j = 0; j < d; ++j) out << 'x' << (j + 1) << ',';
  out << "t,y";
  if (data.has_counterfactuals()) out << ",y0,y1";
  if (data.tau) out << ",tau";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << format_double(data.X(i, j)) << ',';
    out << data.T[i] << ',' << format_double(data.Y[i]);
    if (data.has_counterfactuals()) {
      out << ',' << format_double((*data.Y0)[i]) << ',' << format_double((*data.Y1)[i]);
    }
    if (data.tau) out << ',' << format_double((*data.tau)[i]);
    out << '\n';
  }
  if (!out) throw InputError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Cross-world diagnostics

CorrelationEstimate estimate_conditional_correlation(const Dataset& data,
                                                     std::span<const std::size_t> cond_cols,
                                                     std::span<const double> center,
                                                     double delta) {
  if (!data.has_counterfactuals()) {
    throw InputError(
        "conditional cross-world correlation needs both potential outcomes; "
        "it is unidentifiable from factual data alone");
  }
  if (cond_cols.size() != center.size()) {
    throw ConfigError("one center value is required per conditioning column");
  }
  if (!(delta > 0.0)) throw ConfigError("window half-width must be positive");
  for (auto c : cond_cols) {
    if (c >= data.dim()) {
      throw ConfigError("conditioning column " + std::to_string(c + 1) + " out of range");
    }
  }
  const auto& y0 = *data.Y0;
  const auto& y1 = *data.Y1;
  std::size_t count = 0;
  double m0 = 0.0, m1 = 0.0, s00 = 0.0, s11 = 0.0, s01 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool inside = true;
    for (std::size_t k = 0; k < cond_cols.size() && inside; ++k) {
      inside = std::abs(data.X(i, cond_cols[k]) - center[k]) <= delta;
    }
    if (!inside) continue;
    ++count;
    const double n = static_cast<double>(count);
    const double d0 = y0[i] - m0;
    const double d1 = y1[i] - m1;
    m0 += d0 / n;
    m1 += d1 / n;
    s00 += d0 * (y0[i] - m0);
    s11 += d1 * (y1[i] - m1);
    s01 += d0 * (y1[i] - m1);
  }
  constexpr std::size_t kMinWindow = 30;
  if (count < kMinWindow) {
    throw DiagnosticError("conditioning window holds " + std::to_string(count) +
                              " rows; at least 30 are needed",
                          count);
  }
  const double denom = std::sqrt(s00 * s11);
  if (!(denom > 0.0)) {
    throw DiagnosticError("potential outcomes are constant inside the window", count);
  }
  return {std::clamp(s01 / denom, -1.0, 1.0), count};
}

Rho rho_from_variance_decomposition(double var_h, double var_eps) {
  if (!(var_h >= 0.0) || !(var_eps >= 0.0)) {
    throw DomainError("variance components must be nonnegative");
  }
  if (var_h + var_eps <= 0.0) {
    throw DomainError("variance components cannot both be zero");
  }
  return Rho(var_h / (var_h + var_eps));
}

}  // namespace crossworld
