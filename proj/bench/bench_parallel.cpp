// Serial versus OpenMP timings for the parallel kernels.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "crossworld/cate.hpp"
#include "crossworld/cw.hpp"
#include "crossworld/datagen.hpp"
#include "crossworld/learners.hpp"

using namespace crossworld;

namespace {

double seconds(const std::function<void()>& f, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / reps;
}

void report(const char* name, const std::function<void(Execution)>& kernel, int reps) {
  const double serial = seconds([&] { kernel(Execution::serial); }, reps);
  const double parallel = seconds([&] { kernel(Execution::parallel); }, reps);
  std::printf("%-28s serial %9.4f s  parallel %9.4f s  speedup %5.2fx\n", name, serial, parallel,
              serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 2000;
  std::printf("threads: %d, n = %zu\n", omp_get_max_threads(), n);

  const NoiseSpec noise{Marginal::gaussian, Copula::gaussian, Rho(0.5), 1.0, 2.0};
  const Dataset data = gen_synthetic(n, 3, Rho(0.5), noise, 11);
  const Dataset query = gen_synthetic(1000, 3, Rho(0.5), noise, 12);
  LearnerParams params;
  params.seed = 5;

  report("forest fit (500 trees)", [&](Execution e) { RegressionForest::fit(data.X, data.Y, params, e); }, 3);

  const auto forest = RegressionForest::fit(data.X, data.Y, params);
  report("forest mean predict", [&](Execution e) { forest.predict_mean(query.X, e); }, 3);
  const auto levels = uniform_level_grid(99);
  report("forest quantile predict", [&](Execution e) { forest.predict_quantiles(query.X, levels, e); }, 3);

  LearnerParams small = params;
  small.trees = 100;
  report("bootstrap CATE (B = 50)", [&](Execution e) {
    BootstrapOptions o;
    o.B = 50;
    o.exec = e;
    bootstrap_cate_draws(data, query.X, small, 3, o);
  }, 1);

  const auto arm0 = data.arm_indices(0);
  const auto arm1 = data.arm_indices(1);
  const auto q0 = fit_quantile_model(data.X.select_rows(arm0), select<double>(data.Y, arm0), levels, params);
  const auto q1 = fit_quantile_model(data.X.select_rows(arm1), select<double>(data.Y, arm1), levels, params);
  report("Monte-Carlo convolution", [&](Execution e) {
    cmc_intervals(*q1, *q0, query.X, 0.1, 2000, Rho(0.0), 9, e);
  }, 1);
  return 0;
}
