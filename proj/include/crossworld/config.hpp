#pragma once

#include <optional>
#include <string>

#include "crossworld/eval.hpp"

namespace crossworld {

/// Experiment configuration file: sectioned key = value text.
///
///   [experiment]  alpha, replications, seed, n_test, split_ratio, sigma0,
///                 sigma1, output, timing, threads
///   [grid]        rho, d, n, noise   (comma-separated lists)
///   [learner]     trees, min_leaf, mtry, max_depth, subsample
///   [bootstrap]   B, beta, trees
///   [cmc]         samples, levels
///   [methods]     <label> = <kind> [rho=true|misspec:D|fixed:V] [c=auto|linear|V]
///
/// Every key is optional. Unknown sections or keys are rejected with their
/// "section.key" path.
struct RunConfig {
  ExperimentConfig experiment;
  std::optional<int> threads;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& config);

MethodSpec parse_method_spec(const std::string& label, const std::string& value);

}  // namespace crossworld
