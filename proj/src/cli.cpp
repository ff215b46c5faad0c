#include "crossworld/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "crossworld/config.hpp"
#include "crossworld/conformal.hpp"
#include "crossworld/cw.hpp"
#include "crossworld/datagen.hpp"
#include "crossworld/errors.hpp"
#include "crossworld/eval.hpp"

namespace crossworld {

namespace {

using json = nlohmann::ordered_json;

// Raised for bad command-line values detected after CLI11 parsing.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size()) throw UsageError(what + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + " is empty");
  return out;
}

void apply_threads(std::optional<int> flag, std::optional<int> config_value) {
  std::optional<int> threads = flag;
  if (!threads) {
    if (const char* env = std::getenv("CROSSWORLD_THREADS"); env && *env) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 1) throw UsageError("CROSSWORLD_THREADS must be a positive integer");
      threads = static_cast<int>(v);
    }
  }
  if (!threads) threads = config_value;
  if (threads) {
    if (*threads < 1) throw UsageError("--threads must be >= 1");
    omp_set_num_threads(*threads);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::string show(const Interval& I) { return "[" + fmt(I.lo()) + ", " + fmt(I.hi()) + "]"; }

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::size_t n = 1000;
  std::size_t d = 1;
  double rho = 0.0;
  std::string noise = "gaussian/gaussian";
  std::uint64_t seed = 0;
  std::string out;
  double sigma0 = 1.0;
  double sigma1 = 2.0;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  if (a.n < 1 || a.d < 1) throw UsageError("--n and --d must be >= 1");
  Rho rho(a.rho);
  const NoiseSpec noise = parse_noise(a.noise, rho, a.sigma0, a.sigma1);
  const Dataset data = gen_synthetic(a.n, a.d, rho, noise, a.seed);
  write_csv(data, a.out);
  json meta;
  meta["generator"] = "synthetic";
  meta["version"] = std::string(kVersion);
  meta["n"] = a.n;
  meta["d"] = a.d;
  meta["rho"] = a.rho;
  meta["noise_marginal"] = std::string(to_string(noise.marginal));
  meta["noise_copula"] = std::string(to_string(noise.copula));
  meta["sigma0"] = a.sigma0;
  meta["sigma1"] = a.sigma1;
  meta["seed"] = a.seed;
  meta["propensity"] = "(1 + |x1|) / 4";
  meta["tau"] = "random cubic polynomial in (x1, x2), N(0,1) coefficients, sd 2";
  meta["f0"] = "beta' x, beta ~ N(0, I)";
  write_file(a.out + ".json", meta.dump(2) + "\n");
  out << "wrote " << a.n << " rows to " << a.out << " (metadata " << a.out << ".json)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<int> threads;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  if (a.config.empty() == a.manifest.empty()) {
    throw UsageError("run needs exactly one of --config or --manifest");
  }
  std::string text;
  if (!a.config.empty()) {
    text = read_file(a.config);
  } else {
    json m;
    try {
      m = json::parse(read_file(a.manifest));
      text = m.at("config").get<std::string>();
    } catch (const json::exception& e) {
      throw InputError("manifest '" + a.manifest + "' is malformed: " + e.what());
    }
  }
  RunConfig config = parse_config(text);
  if (!a.out.empty()) config.experiment.output = a.out;
  apply_threads(a.threads, config.threads);

  const std::string path = config.experiment.output;
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write '" + path + "'");
  write_results_header(csv);
  std::size_t failed = 0;
  std::size_t count = 0;
  const auto start = std::chrono::steady_clock::now();
  run_experiment(config.experiment, [&](const ExperimentResult& r) {
    write_result_rows(csv, r, config.experiment.timing);
    csv.flush();
    ++count;
    if (r.status != "ok") ++failed;
  });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!csv) throw std::runtime_error("write to '" + path + "' failed");

  json manifest;
  manifest["software"] = "crossworld";
  manifest["version"] = std::string(kVersion);
  manifest["results"] = path;
  manifest["replications_run"] = count;
  manifest["replications_failed"] = failed;
  manifest["wall_time_s"] = wall;
  manifest["config"] = to_config_text(config);
  write_file(path + ".manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << count << " replications to " << path;
  if (failed) out << " (" << failed << " failed)";
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string data;
  std::string cond_cols;
  std::string center;
  double delta = 0.1;
  std::string csv;
  std::optional<double> var_h;
  std::optional<double> var_eps;
};

std::vector<std::size_t> parse_columns(const std::string& text, std::size_t d) {
  std::vector<std::size_t> out;
  if (text.empty()) {
    for (std::size_t j = 0; j < d; ++j) out.push_back(j);
    return out;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string s = item;
    if (!s.empty() && s[0] == 'x') s = s.substr(1);
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || v < 1 || static_cast<std::size_t>(v) > d) {
      throw UsageError("--cond-cols: '" + item + "' is not a covariate column 1.." +
                       std::to_string(d));
    }
    out.push_back(static_cast<std::size_t>(v - 1));
  }
  return out;
}

int cmd_rho_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  std::ostringstream csv;
  if (a.var_h || a.var_eps) {
    if (!a.var_h || !a.var_eps) throw UsageError("--var-h and --var-eps must be given together");
    const Rho rho = rho_from_variance_decomposition(*a.var_h, *a.var_eps);
    out << "variance decomposition: var(H) = " << fmt(*a.var_h) << ", var(eps) = "
        << fmt(*a.var_eps) << "\n"
        << "rho = var(H) / (var(H) + var(eps)) = " << fmt(rho.value()) << "\n";
    csv << "source,estimate,count\n"
        << "variance_decomposition," << format_double(rho.value()) << ",\n";
  } else {
    if (a.data.empty()) throw UsageError("rho-diagnose needs --data or --var-h/--var-eps");
    const Dataset data = load_csv(a.data);
    if (!data.has_counterfactuals()) {
      throw InputError(
          "'" + a.data + "' has no y0/y1 columns. The cross-world correlation "
          "cor(Y(1), Y(0) | X) is unidentifiable from factual data alone: each unit reveals only "
          "one potential outcome. Supply counterfactual columns or use --var-h/--var-eps.");
    }
    const auto cols = parse_columns(a.cond_cols, data.dim());
    std::vector<double> center;
    if (a.center.empty()) {
      for (auto j : cols) {
        std::vector<double> v(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) v[i] = data.X(i, j);
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        center.push_back(v[v.size() / 2]);
      }
    } else {
      center = parse_doubles(a.center, "--center");
    }
    if (center.size() != cols.size()) {
      throw UsageError("--center needs one value per conditioning column (" +
                       std::to_string(cols.size()) + ")");
    }
    if (!(a.delta > 0.0)) throw UsageError("--delta must be positive");
    const CorrelationEstimate est = estimate_conditional_correlation(data, cols, center, a.delta);
    out << "conditional correlation of (Y1, Y0) on window";
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out << " |x" << cols[k] + 1 << " - " << fmt(center[k]) << "| <= " << fmt(a.delta);
    }
    out << "\nrho_hat = " << fmt(est.estimate) << " from " << est.count << " rows\n";
    csv << "source,estimate,count\n"
        << "window," << format_double(est.estimate) << ',' << est.count << "\n";
  }
  if (!a.csv.empty()) {
    write_file(a.csv, csv.str());
  } else {
    out << "\n" << csv.str();
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct IntervalArgs {
  std::string data;
  std::string x;
  double rho = 0.0;
  double alpha = 0.1;
  std::string method = "cw";
  std::string c = "auto";
  std::uint64_t seed = 0;
  std::size_t trees = 500;
  std::size_t min_leaf = 10;
  std::size_t B = 200;
  double beta = 0.1;
  std::size_t bootstrap_trees = 100;
  std::size_t samples = 10000;
  std::optional<int> threads;
};

int cmd_interval(const IntervalArgs& a, std::ostream& out) {
  const Rho rho(a.rho);
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  const MethodKind kind = parse_method_kind(a.method);
  const CRule c_rule = parse_c_rule(a.c);
  apply_threads(a.threads, std::nullopt);
  const Dataset data = load_csv(a.data);
  const auto x = parse_doubles(a.x, "--x");
  if (x.size() != data.dim()) {
    throw InputError("--x has " + std::to_string(x.size()) + " values but the data has " +
                     std::to_string(data.dim()) + " covariates");
  }
  Matrix X(1, x.size());
  std::copy(x.begin(), x.end(), X.row(0).begin());

  const SplitPlan split = split_dataset(data, 0.5, derive_seed(a.seed, "split"));
  LearnerParams params;
  params.trees = a.trees;
  params.min_leaf = a.min_leaf;
  const auto levels = uniform_level_grid(99);
  ArmModels models[2];
  for (int arm = 0; arm < 2; ++arm) {
    const auto rows = arm_rows(data, split.train, arm);
    params.seed = derive_seed(a.seed, "arm-forest", static_cast<std::uint64_t>(arm));
    models[arm] = fit_arm_models(data.X.select_rows(rows), select<double>(data.Y, rows), levels, params);
  }
  const double alpha_arm = kind == MethodKind::naive        ? a.alpha / 2.0
                           : kind == MethodKind::sqrt_naive ? sqrt_level(a.alpha)
                                                            : a.alpha;
  BandPoint at[2];
  for (int arm = 0; arm < 2; ++arm) {
    const auto rows = arm_rows(data, split.calibration, arm);
    const CalibratedBand band = calibrate_band(models[arm], data.X.select_rows(rows),
                                               select<double>(data.Y, rows), arm, alpha_arm);
    at[arm] = band.at(X.row(0));
  }
  const double tau_hat = at[1].mean - at[0].mean;
  Interval result(0.0, 0.0);
  std::string extra;
  switch (kind) {
    case MethodKind::cw: result = cw_interval(tau_hat, at[1], at[0], rho); break;
    case MethodKind::cw_ci: {
      LearnerParams bp = params;
      bp.trees = a.bootstrap_trees;
      const Dataset fit_part = data.subset(split.train);
      BootstrapOptions options;
      options.B = a.B;
      options.beta = a.beta;
      const auto draws = bootstrap_cate_draws(fit_part, X, bp, derive_seed(a.seed, "bootstrap"), options);
      const CateEstimate ci = percentile_ci(draws, {tau_hat}, a.beta);
      const double c = c_rule.effective(rho);
      result = cw_ci_interval(ci, 0, at[1], at[0], rho, c);
      extra = "cate_ci: " + show(ci.ci(0)) + " (beta " + fmt(a.beta) + ", B " +
              std::to_string(a.B) + ", c " + fmt(c) + ")\n";
      break;
    }
    case MethodKind::naive:
    case MethodKind::sqrt_naive:
      result = naive_ite_interval(at[1].interval(), at[0].interval());
      break;
    case MethodKind::cmc:
      result = cmc_interval(*models[1].quantiles, *models[0].quantiles, X.row(0), a.alpha,
                            a.samples, rho, derive_seed(a.seed, "cmc"));
      break;
  }
  out << "method: " << to_string(kind) << "\n"
      << "rho: " << fmt(rho.value()) << "\n"
      << "alpha: " << fmt(a.alpha) << " (per-arm " << fmt(alpha_arm) << ")\n"
      << "tau_hat: " << fmt(tau_hat) << "\n"
      << "band1: " << show(at[1].interval()) << " mean " << fmt(at[1].mean) << " l " << fmt(at[1].lower)
      << " u " << fmt(at[1].upper) << "\n"
      << "band0: " << show(at[0].interval()) << " mean " << fmt(at[0].mean) << " l " << fmt(at[0].lower)
      << " u " << fmt(at[0].upper) << "\n"
      << extra << "interval: " << show(result) << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prediction intervals for individual treatment effects under a cross-world "
               "correlation assumption",
               "crossworld"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic dataset CSV with counterfactuals");
  g->add_option("--n", gen.n, "number of units")->required();
  g->add_option("--d", gen.d, "covariate dimension")->required();
  g->add_option("--rho", gen.rho, "cross-world correlation in [-1, 1]")->required();
  g->add_option("--noise", gen.noise, "marginal/copula, e.g. laplace/frank");
  g->add_option("--seed", gen.seed, "master seed")->required();
  g->add_option("--out", gen.out, "output CSV path")->required();
  g->add_option("--sigma0", gen.sigma0, "noise scale of Y(0)");
  g->add_option("--sigma1", gen.sigma1, "noise scale of Y(1)");

  RunArgs run;
  int run_threads = 0;
  auto* r = app.add_subcommand("run", "Run an experiment grid and write the results CSV");
  r->add_option("--config", run.config, "experiment config file");
  r->add_option("--manifest", run.manifest, "re-run the config recorded in a run manifest");
  r->add_option("--out", run.out, "results CSV path (overrides experiment.output)");
  auto* rt = r->add_option("--threads", run_threads, "maximum worker threads");

  DiagnoseArgs diag;
  double var_h = 0.0;
  double var_eps = 0.0;
  auto* dg = app.add_subcommand("rho-diagnose", "Estimate or compute the cross-world correlation");
  dg->add_option("--data", diag.data, "dataset CSV with y0/y1 columns");
  dg->add_option("--cond-cols", diag.cond_cols, "conditioning covariates, e.g. 1,2 or x1 (default all)");
  dg->add_option("--center", diag.center, "window center per conditioning column (default medians)");
  dg->add_option("--delta", diag.delta, "window half-width");
  dg->add_option("--csv", diag.csv, "write the machine-readable report here");
  auto* vh = dg->add_option("--var-h", var_h, "variance of the shared hidden component");
  auto* ve = dg->add_option("--var-eps", var_eps, "variance of the idiosyncratic noise");

  IntervalArgs iv;
  int iv_threads = 0;
  auto* in = app.add_subcommand("interval", "Fit on a dataset and print the interval at one query point");
  in->add_option("--data", iv.data, "training dataset CSV")->required();
  in->add_option("--x", iv.x, "query point, comma-separated")->required();
  in->add_option("--rho", iv.rho, "assumed cross-world correlation in [-1, 1]");
  in->add_option("--alpha", iv.alpha, "target miscoverage");
  in->add_option("--method", iv.method, "cw, cw+ci, naive, sqrt-naive or cmc");
  in->add_option("--c", iv.c, "CI multiplier for cw+ci: auto, linear or a value in [0, 1]");
  in->add_option("--seed", iv.seed, "seed");
  in->add_option("--trees", iv.trees, "forest size");
  in->add_option("--min-leaf", iv.min_leaf, "minimum leaf size");
  in->add_option("--B", iv.B, "bootstrap replicates for cw+ci");
  in->add_option("--beta", iv.beta, "CATE CI miscoverage for cw+ci");
  in->add_option("--bootstrap-trees", iv.bootstrap_trees, "forest size inside the bootstrap");
  in->add_option("--samples", iv.samples, "Monte-Carlo sample count for cmc");
  auto* it = in->add_option("--threads", iv_threads, "maximum worker threads");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*r) {
      if (rt->count()) run.threads = run_threads;
      return cmd_run(run, out);
    }
    if (*dg) {
      if (vh->count()) diag.var_h = var_h;
      if (ve->count()) diag.var_eps = var_eps;
      return cmd_rho_diagnose(diag, out);
    }
    if (*in) {
      if (it->count()) iv.threads = iv_threads;
      return cmd_interval(iv, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace crossworld
