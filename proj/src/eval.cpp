#include "crossworld/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "crossworld/cate.hpp"
#include "crossworld/conformal.hpp"
#include "crossworld/errors.hpp"
#include "crossworld/rng.hpp"

namespace crossworld {

double coverage(std::span<const Interval> intervals, std::span<const double> ite) {
  if (intervals.empty()) throw InputError("coverage of an empty test set is undefined");
  if (intervals.size() != ite.size()) {
    throw InputError("coverage: " + std::to_string(intervals.size()) + " intervals but " +
                     std::to_string(ite.size()) + " effects");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ite.size(); ++i) hit += intervals[i].contains(ite[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(ite.size());
}

double avg_width(std::span<const Interval> intervals) {
  if (intervals.empty()) throw InputError("average width of an empty set is undefined");
  double sum = 0.0;
  for (const auto& I : intervals) sum += I.width();
  return sum / static_cast<double>(intervals.size());
}

double coverage_width_loss(double width, double wmin, double wmax, double cov, double alpha) {
  if (!(cov >= 0.0 && cov <= 1.0)) throw DomainError("coverage must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (wmin > wmax) throw DomainError("wmin exceeds wmax");
  const double span = wmax - wmin;
  const double width_term = span > 0.0 ? (width - wmin) / span : 0.0;
  return width_term + (2.0 / alpha) * std::abs(cov - (1.0 - alpha));
}

std::string_view to_string(MethodKind kind) noexcept {
  switch (kind) {
    case MethodKind::cw: return "cw";
    case MethodKind::cw_ci: return "cw+ci";
    case MethodKind::naive: return "naive";
    case MethodKind::sqrt_naive: return "sqrt-naive";
    case MethodKind::cmc: return "cmc";
  }
  return "?";
}

MethodKind parse_method_kind(std::string_view s) {
  if (s == "cw") return MethodKind::cw;
  if (s == "cw+ci" || s == "cw_ci") return MethodKind::cw_ci;
  if (s == "naive") return MethodKind::naive;
  if (s == "sqrt-naive" || s == "sqrt_naive") return MethodKind::sqrt_naive;
  if (s == "cmc") return MethodKind::cmc;
  throw ConfigError("unknown method '" + std::string(s) +
                    "' (expected cw, cw+ci, naive, sqrt-naive or cmc)");
}

Rho RhoRule::resolve(Rho rho_true) const {
  switch (kind) {
    case Kind::truth: return rho_true;
    case Kind::misspecified: return misspecify_rho(rho_true, value);
    case Kind::fixed: return Rho(value);
  }
  return rho_true;
}

std::string RhoRule::label() const {
  switch (kind) {
    case Kind::truth: return "true";
    case Kind::misspecified: return "misspec:" + format_double(value);
    case Kind::fixed: return "fixed:" + format_double(value);
  }
  return "?";
}

namespace {

double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

RhoRule parse_rho_rule(const std::string& text) {
  if (text == "true" || text == "truth") return {};
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  if (colon == std::string::npos) throw ConfigError("rho rule must be true, misspec:D or fixed:V");
  const double v = parse_number(text.substr(colon + 1), "rho rule '" + text + "'");
  if (head == "misspec" || head == "misspecified") return {RhoRule::Kind::misspecified, v};
  if (head == "fixed") {
    Rho check(v);
    (void)check;
    return {RhoRule::Kind::fixed, v};
  }
  throw ConfigError("rho rule must be true, misspec:D or fixed:V, got '" + text + "'");
}

std::vector<MethodSpec> default_methods() {
  return {
      {"cw", MethodKind::cw, {}, CRule::automatic()},
      {"cw+ci", MethodKind::cw_ci, {}, CRule::automatic()},
      {"naive", MethodKind::naive, {}, CRule::automatic()},
      {"sqrt-naive", MethodKind::sqrt_naive, {}, CRule::automatic()},
      {"cmc", MethodKind::cmc, {RhoRule::Kind::fixed, 0.0}, CRule::automatic()},
  };
}

void ExperimentConfig::validate() const {
  if (rhos.empty()) throw ConfigError("grid.rho must not be empty");
  if (dims.empty()) throw ConfigError("grid.d must not be empty");
  if (ns.empty()) throw ConfigError("grid.n must not be empty");
  if (noises.empty()) throw ConfigError("grid.noise must not be empty");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (double r : rhos) Rho check(r);
  for (auto d : dims) {
    if (d == 0) throw ConfigError("grid.d entries must be >= 1");
  }
  for (auto n : ns) {
    if (n < 4) throw ConfigError("grid.n entries must be >= 4");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("experiment.alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("bootstrap.beta must lie in (0, 1)");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("experiment.split_ratio must lie in (0, 1)");
  }
  if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw ConfigError("noise scales must be positive");
  if (n_test == 0) throw ConfigError("experiment.n_test must be >= 1");
  if (replications == 0) throw ConfigError("experiment.replications must be >= 1");
  if (bootstrap_trees == 0) throw ConfigError("bootstrap.trees must be >= 1");
  std::vector<std::string> labels;
  for (const auto& m : methods) {
    if (m.label.empty()) throw ConfigError("method labels must be nonempty");
    if (std::find(labels.begin(), labels.end(), m.label) != labels.end()) {
      throw ConfigError("duplicate method label '" + m.label + "'");
    }
    labels.push_back(m.label);
    if (m.kind == MethodKind::cw_ci && B < 50) throw ConfigError("bootstrap.B must be >= 50");
    if (m.kind == MethodKind::cmc && cmc_samples < 1000) {
      throw ConfigError("cmc.samples must be >= 1000");
    }
    if (m.kind == MethodKind::cmc && cmc_levels < 9) throw ConfigError("cmc.levels must be >= 9");
  }
}

std::size_t ExperimentConfig::cell_count() const {
  return rhos.size() * dims.size() * ns.size() * noises.size();
}

GridCell grid_cell(const ExperimentConfig& config, std::size_t index) {
  if (index >= config.cell_count()) throw ConfigError("grid cell index out of range");
  GridCell c;
  c.rho = config.rhos[index % config.rhos.size()];
  index /= config.rhos.size();
  c.n = config.ns[index % config.ns.size()];
  index /= config.ns.size();
  c.d = config.dims[index % config.dims.size()];
  index /= config.dims.size();
  c.marginal = config.noises[index].first;
  c.copula = config.noises[index].second;
  return c;
}

const MethodResult* ExperimentResult::find(std::string_view label) const {
  for (const auto& m : methods) {
    if (m.method == label) return &m;
  }
  return nullptr;
}

void normalize_cw_loss(ExperimentResult& result, double alpha) {
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = -wmin;
  for (const auto& m : result.methods) {
    if (!m.ok) continue;
    wmin = std::min(wmin, m.avg_width);
    wmax = std::max(wmax, m.avg_width);
  }
  for (auto& m : result.methods) {
    if (m.ok) m.cw_loss = coverage_width_loss(m.avg_width, wmin, wmax, m.coverage, alpha);
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Everything fitted once per replication and shared across methods.
class ReplicationState {
 public:
  ReplicationState(const ExperimentConfig& config, const GridCell& cell, std::uint64_t seed,
                   Execution exec)
      : config_(config), exec_(exec), seed_(seed) {
    NoiseSpec noise{cell.marginal, cell.copula, Rho(cell.rho), config.sigma0, config.sigma1};
    const SyntheticDgp dgp = SyntheticDgp::create(cell.d, noise, derive_seed(seed, "dgp"));
    train_ = dgp.sample(cell.n, derive_seed(seed, "train"));
    test_ = dgp.sample(config.n_test, derive_seed(seed, "test"));
    split_ = split_dataset(train_, config.split_ratio, derive_seed(seed, "split"));
    const auto levels = uniform_level_grid(config.cmc_levels);
    for (int arm = 0; arm < 2; ++arm) {
      const auto rows = arm_rows(train_, split_.train, arm);
      LearnerParams p = config.learner;
      p.seed = derive_seed(seed, "arm-forest", static_cast<std::uint64_t>(arm));
      models_[arm] = fit_arm_models(train_.X.select_rows(rows), select<double>(train_.Y, rows),
                                    levels, p, exec);
    }
  }

  const Dataset& test() const { return test_; }
  const ArmModels& models(int arm) const { return models_[arm]; }

  // Band evaluations on the test points for both arms at one per-arm level.
  const std::pair<std::vector<BandPoint>, std::vector<BandPoint>>& bands(double alpha_arm) {
    for (const auto& [a, b] : bands_) {
      if (a == alpha_arm) return b;
    }
    std::vector<BandPoint> at[2];
    for (int arm = 0; arm < 2; ++arm) {
      const auto rows = arm_rows(train_, split_.calibration, arm);
      const CalibratedBand band = calibrate_band(models_[arm], train_.X.select_rows(rows),
                                                 select<double>(train_.Y, rows), arm, alpha_arm);
      at[arm] = band.at(test_.X);
    }
    bands_.emplace_back(alpha_arm, std::make_pair(std::move(at[1]), std::move(at[0])));
    return bands_.back().second;
  }

  std::vector<double> tau_hat(double alpha_arm) {
    const auto& [b1, b0] = bands(alpha_arm);
    std::vector<double> out(b1.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b1[i].mean - b0[i].mean;
    return out;
  }

  const CateEstimate& cate() {
    if (!cate_) {
      LearnerParams p = config_.learner;
      p.trees = config_.bootstrap_trees;
      BootstrapOptions options;
      options.B = config_.B;
      options.beta = config_.beta;
      options.exec = exec_;
      const Dataset fit_part = train_.subset(split_.train);
      const BootstrapDraws draws =
          bootstrap_cate_draws(fit_part, test_.X, p, derive_seed(seed_, "bootstrap"), options);
      cate_ = percentile_ci(draws, tau_hat(config_.alpha), config_.beta);
    }
    return *cate_;
  }

 private:
  const ExperimentConfig& config_;
  Execution exec_;
  std::uint64_t seed_;
  Dataset train_;
  Dataset test_;
  SplitPlan split_;
  ArmModels models_[2];
  std::vector<std::pair<double, std::pair<std::vector<BandPoint>, std::vector<BandPoint>>>> bands_;
  std::optional<CateEstimate> cate_;
};

std::vector<Interval> method_intervals(const MethodSpec& spec, ReplicationState& state,
                                       const ExperimentConfig& config, Rho rho_true,
                                       std::uint64_t seed, Execution exec) {
  const double alpha = config.alpha;
  std::vector<Interval> out;
  switch (spec.kind) {
    case MethodKind::cw:
    case MethodKind::cw_ci: {
      const Rho rho = spec.rho.resolve(rho_true);
      const auto& [b1, b0] = state.bands(alpha);
      const auto tau = state.tau_hat(alpha);
      out.reserve(tau.size());
      if (spec.kind == MethodKind::cw) {
        for (std::size_t i = 0; i < tau.size(); ++i) out.push_back(cw_interval(tau[i], b1[i], b0[i], rho));
      } else {
        const CateEstimate& ci = state.cate();
        const double c = spec.c.effective(rho);
        for (std::size_t i = 0; i < tau.size(); ++i) {
          out.push_back(cw_ci_interval(tau[i], ci.r_lower[i], ci.r_upper[i], b1[i], b0[i], rho, c));
        }
      }
      break;
    }
    case MethodKind::naive:
    case MethodKind::sqrt_naive: {
      const double a = spec.kind == MethodKind::naive ? alpha / 2.0 : sqrt_level(alpha);
      const auto& [b1, b0] = state.bands(a);
      out.reserve(b1.size());
      for (std::size_t i = 0; i < b1.size(); ++i) {
        out.push_back(naive_ite_interval(b1[i].interval(), b0[i].interval()));
      }
      break;
    }
    case MethodKind::cmc: {
      const Rho rho = spec.rho.resolve(rho_true);
      out = cmc_intervals(*state.models(1).quantiles, *state.models(0).quantiles, state.test().X,
                          alpha, config.cmc_samples, rho, derive_seed(seed, "cmc"), exec);
      break;
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_replication(const ExperimentConfig& config, std::size_t cell,
                                 std::size_t rep, Execution exec) {
  const GridCell g = grid_cell(config, cell);
  ExperimentResult result;
  result.cell = cell;
  result.rho_true = g.rho;
  result.d = g.d;
  result.n = g.n;
  result.marginal = g.marginal;
  result.copula = g.copula;
  result.rep = rep;
  const std::uint64_t cell_seed = derive_seed(config.seed, "cell", cell);
  result.seed = derive_seed(cell_seed, "rep", rep);
  const Rho rho_true(g.rho);
  for (const auto& spec : config.methods) {
    MethodResult m;
    m.method = spec.label;
    m.kind = spec.kind;
    if (spec.uses_rho()) m.rho_used = spec.rho.resolve(rho_true).value();
    result.methods.push_back(std::move(m));
  }
  try {
    ReplicationState state(config, g, result.seed, exec);
    result.test_ite = state.test().ite();
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      MethodResult& m = result.methods[k];
      const auto start = Clock::now();
      m.intervals = method_intervals(config.methods[k], state, config, rho_true, result.seed, exec);
      m.runtime_ms = elapsed_ms(start);
      m.coverage = coverage(m.intervals, result.test_ite);
      m.avg_width = avg_width(m.intervals);
      m.ok = true;
    }
    normalize_cw_loss(result, config.alpha);
  } catch (const std::exception& e) {
    result.status = std::string("error: ") + e.what();
    for (auto& m : result.methods) {
      m.ok = false;
      m.intervals.clear();
    }
  }
  return result;
}

std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config,
                                             const ResultSink& sink, Execution exec) {
  config.validate();
  const std::size_t reps = config.replications;
  const std::size_t jobs = config.cell_count() * reps;
  std::vector<ExperimentResult> results(jobs);
  std::vector<char> done(jobs, 0);
  std::size_t next = 0;

  auto finish = [&](std::size_t j) {
    done[j] = 1;
    while (next < jobs && done[next]) {
      if (sink) sink(results[next]);
      ++next;
    }
  };

  const auto total = static_cast<std::int64_t>(jobs);
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t j = 0; j < total; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      results[uj] = run_replication(config, uj / reps, uj % reps, Execution::serial);
#pragma omp critical(crossworld_experiment_sink)
      finish(uj);
    }
  } else {
    for (std::int64_t j = 0; j < total; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      results[uj] = run_replication(config, uj / reps, uj % reps, Execution::serial);
      finish(uj);
    }
  }
  return results;
}

std::vector<MethodSummary> summarize(std::span<const ExperimentResult> results, double alpha,
                                     std::span<const std::string> methods) {
  std::map<std::pair<std::size_t, std::string>, MethodSummary> acc;
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& r : results) {
    for (const auto& m : r.methods) {
      if (!m.ok) continue;
      if (!methods.empty() && std::find(methods.begin(), methods.end(), m.method) == methods.end()) {
        continue;
      }
      const auto key = std::make_pair(r.cell, m.method);
      auto [it, inserted] = acc.try_emplace(key);
      if (inserted) {
        it->second.cell = r.cell;
        it->second.method = m.method;
        order.push_back(key);
      }
      it->second.replications += 1;
      it->second.coverage += m.coverage;
      it->second.avg_width += m.avg_width;
    }
  }
  std::map<std::size_t, std::pair<double, double>> range;
  for (auto& [key, s] : acc) {
    s.coverage /= static_cast<double>(s.replications);
    s.avg_width /= static_cast<double>(s.replications);
    auto [it, inserted] = range.try_emplace(s.cell, s.avg_width, s.avg_width);
    if (!inserted) {
      it->second.first = std::min(it->second.first, s.avg_width);
      it->second.second = std::max(it->second.second, s.avg_width);
    }
  }
  std::vector<MethodSummary> out;
  out.reserve(order.size());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& key : order) {
    MethodSummary s = acc.at(key);
    const auto [wmin, wmax] = range.at(s.cell);
    s.cw_loss = coverage_width_loss(s.avg_width, wmin, wmax, s.coverage, alpha);
    out.push_back(std::move(s));
  }
  return out;
}

void write_results_header(std::ostream& out) { out << kResultsHeader << '\n'; }

void write_result_rows(std::ostream& out, const ExperimentResult& result, bool timing) {
  for (const auto& m : result.methods) {
    out << m.method << ',' << format_double(result.rho_true) << ',';
    if (m.rho_used) out << format_double(*m.rho_used);
    out << ',' << result.d << ',' << result.n << ',' << to_string(result.marginal) << ','
        << to_string(result.copula) << ',' << result.rep << ',' << result.seed << ',';
    if (m.ok) {
      out << format_double(m.coverage) << ',' << format_double(m.avg_width) << ','
          << format_double(m.cw_loss) << ',';
    } else {
      out << ",,,";
    }
    if (timing && m.ok) out << format_double(m.runtime_ms);
    out << ',';
    std::string status = result.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << status << '\n';
  }
}

}  // namespace crossworld
