#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossworld/core.hpp"
#include "crossworld/cw.hpp"
#include "crossworld/datagen.hpp"
#include "crossworld/learners.hpp"

namespace crossworld {

// Fraction of i with ite[i] inside intervals[i].
double coverage(std::span<const Interval> intervals, std::span<const double> ite);
double avg_width(std::span<const Interval> intervals);

// (width - wmin) / (wmax - wmin) + (2 / alpha) |coverage - (1 - alpha)|;
// the width term is 0 when wmax == wmin.
double coverage_width_loss(double width, double wmin, double wmax, double cov, double alpha);

enum class MethodKind { cw, cw_ci, naive, sqrt_naive, cmc };

std::string_view to_string(MethodKind kind) noexcept;
MethodKind parse_method_kind(std::string_view s);

// Which rho a method is handed in a cell with true correlation rho_true.
struct RhoRule {
  enum class Kind { truth, misspecified, fixed };
  Kind kind = Kind::truth;
  double value = 0.0;  // delta for misspecified, rho for fixed

  Rho resolve(Rho rho_true) const;
  std::string label() const;
};

RhoRule parse_rho_rule(const std::string& text);

struct MethodSpec {
  std::string label;
  MethodKind kind = MethodKind::cw;
  RhoRule rho;
  CRule c = CRule::automatic();

  bool uses_rho() const noexcept { return kind == MethodKind::cw || kind == MethodKind::cw_ci || kind == MethodKind::cmc; }
};

// Default method set: cw, cw+ci, naive, sqrt-naive, cmc (cmc at rho = 0).
std::vector<MethodSpec> default_methods();

struct ExperimentConfig {
  std::vector<double> rhos = {-1.0, -0.5, 0.0, 0.5, 1.0};
  std::vector<std::size_t> dims = {1};
  std::vector<std::size_t> ns = {2000};
  std::vector<std::pair<Marginal, Copula>> noises = {{Marginal::gaussian, Copula::gaussian}};
  double sigma0 = 1.0;
  double sigma1 = 2.0;
  std::vector<MethodSpec> methods = default_methods();
  double alpha = 0.1;
  double split_ratio = 0.5;
  std::size_t n_test = 1000;
  std::size_t replications = 20;
  std::uint64_t seed = 2025;
  LearnerParams learner{};
  std::size_t bootstrap_trees = 100;  // forest size inside each bootstrap replicate
  std::size_t B = 200;
  double beta = 0.1;
  std::size_t cmc_samples = 2000;
  std::size_t cmc_levels = 99;
  bool timing = false;
  std::string output = "results.csv";

  void validate() const;
  std::size_t cell_count() const;
};

struct MethodResult {
  std::string method;
  MethodKind kind = MethodKind::cw;
  std::optional<double> rho_used;
  std::vector<Interval> intervals;
  double coverage = 0.0;
  double avg_width = 0.0;
  double cw_loss = 0.0;
  double runtime_ms = 0.0;
  bool ok = false;
};

struct ExperimentResult {
  std::size_t cell = 0;
  double rho_true = 0.0;
  std::size_t d = 0;
  std::size_t n = 0;
  Marginal marginal = Marginal::gaussian;
  Copula copula = Copula::gaussian;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::vector<MethodResult> methods;
  std::vector<double> test_ite;  // shared by every method in this result

  const MethodResult* find(std::string_view label) const;
};

// Rescales cw_loss across the methods of one result.
void normalize_cw_loss(ExperimentResult& result, double alpha);

// Called once per replication, in deterministic (cell, rep) order.
using ResultSink = std::function<void(const ExperimentResult&)>;

/// Runs every (cell, replication) of the grid. Seeds derive as
/// master -> cell index -> replication -> module, so results do not depend on
/// the number of threads. Failures are recorded in `status`, never dropped.
std::vector<ExperimentResult> run_experiment(const ExperimentConfig& config,
                                             const ResultSink& sink = {},
                                             Execution exec = Execution::parallel);

// One replication; exposed for tests.
ExperimentResult run_replication(const ExperimentConfig& config, std::size_t cell,
                                 std::size_t rep, Execution exec = Execution::serial);

struct GridCell {
  double rho = 0.0;
  std::size_t d = 1;
  std::size_t n = 0;
  Marginal marginal = Marginal::gaussian;
  Copula copula = Copula::gaussian;
};

// Cell k of the grid; noise varies slowest, rho fastest.
GridCell grid_cell(const ExperimentConfig& config, std::size_t index);

// Per-(cell, method) means over the successful replications. cw_loss is
// recomputed from those means, with wmin / wmax taken across the methods
// listed in `methods` (all methods when empty).
struct MethodSummary {
  std::size_t cell = 0;
  std::string method;
  std::size_t replications = 0;
  double coverage = 0.0;
  double avg_width = 0.0;
  double cw_loss = 0.0;
};

std::vector<MethodSummary> summarize(std::span<const ExperimentResult> results, double alpha,
                                     std::span<const std::string> methods = {});

inline constexpr std::string_view kResultsHeader =
    "method,rho_true,rho_used,d,n,noise_marginal,noise_copula,rep,seed,coverage,avg_width,"
    "cw_loss,runtime_ms,status";

void write_results_header(std::ostream& out);
void write_result_rows(std::ostream& out, const ExperimentResult& result, bool timing);

}  // namespace crossworld
