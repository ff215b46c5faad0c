#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include "crossworld/cate.hpp"
#include "crossworld/cw.hpp"
#include "crossworld/eval.hpp"
#include "crossworld/learners.hpp"

using namespace crossworld;

namespace {

struct Threads {
  explicit Threads(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
  int saved;
};

const NoiseSpec kNoise{Marginal::gaussian, Copula::gaussian, Rho(0.5), 1.0, 2.0};

}  // namespace

TEST_CASE("forest fit and predictions are bit-identical serial and parallel") {
  Threads t(4);
  const Dataset d = gen_synthetic(800, 3, Rho(0.5), kNoise, 1);
  const Dataset q = gen_synthetic(300, 3, Rho(0.5), kNoise, 2);
  LearnerParams p;
  p.trees = 60;
  p.seed = 4;
  const auto fs = RegressionForest::fit(d.X, d.Y, p, Execution::serial);
  const auto fp = RegressionForest::fit(d.X, d.Y, p, Execution::parallel);
  CHECK(fs.predict_mean(q.X, Execution::serial) == fp.predict_mean(q.X, Execution::parallel));
  const auto levels = uniform_level_grid(19);
  CHECK(fs.predict_quantiles(q.X, levels, Execution::serial) == fp.predict_quantiles(q.X, levels, Execution::parallel));
}

TEST_CASE("bootstrap draws do not depend on the thread count") {
  const Dataset d = gen_synthetic(600, 1, Rho(0.5), kNoise, 3);
  const Dataset q = gen_synthetic(40, 1, Rho(0.5), kNoise, 4);
  LearnerParams p;
  p.trees = 20;
  BootstrapOptions o;
  o.B = 50;
  o.exec = Execution::serial;
  const auto serial = bootstrap_cate_draws(d, q.X, p, 5, o);
  o.exec = Execution::parallel;
  for (int n : {1, 2, 4}) {
    Threads t(n);
    CHECK(bootstrap_cate_draws(d, q.X, p, 5, o).tau == serial.tau);
  }
}

TEST_CASE("Monte-Carlo convolution does not depend on the thread count") {
  const Dataset d = gen_synthetic(800, 1, Rho(0.5), kNoise, 6);
  const Dataset q = gen_synthetic(64, 1, Rho(0.5), kNoise, 7);
  const auto levels = uniform_level_grid(19);
  LearnerParams p;
  p.trees = 30;
  const auto a0 = d.arm_indices(0), a1 = d.arm_indices(1);
  const auto q0 = fit_quantile_model(d.X.select_rows(a0), select<double>(d.Y, a0), levels, p);
  const auto q1 = fit_quantile_model(d.X.select_rows(a1), select<double>(d.Y, a1), levels, p);
  const auto serial = cmc_intervals(*q1, *q0, q.X, 0.1, 1000, Rho(0.3), 8, Execution::serial);
  Threads t(3);
  CHECK(cmc_intervals(*q1, *q0, q.X, 0.1, 1000, Rho(0.3), 8, Execution::parallel) == serial);
}

TEST_CASE("experiment results do not depend on the thread count") {
  ExperimentConfig c;
  c.rhos = {0.0, 1.0};
  c.ns = {500};
  c.n_test = 100;
  c.replications = 3;
  c.learner.trees = 30;
  c.bootstrap_trees = 15;
  c.B = 50;
  c.cmc_samples = 1000;
  c.cmc_levels = 19;
  const auto serial = run_experiment(c, {}, Execution::serial);
  Threads t(4);
  const auto parallel = run_experiment(c, {}, Execution::parallel);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t j = 0; j < serial.size(); ++j) {
    REQUIRE(serial[j].seed == parallel[j].seed);
    for (std::size_t k = 0; k < serial[j].methods.size(); ++k) {
      CHECK(serial[j].methods[k].intervals == parallel[j].methods[k].intervals);
      CHECK(serial[j].methods[k].cw_loss == parallel[j].methods[k].cw_loss);
    }
  }
}
