#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "klmm/lmm.hpp"
#include "klmm/rng.hpp"
#include "klmm/simulate.hpp"
#include "klmm/spectral_kernel.hpp"

namespace {

klmm::SimulatedCohort make_cohort(Eigen::Index n, Eigen::Index m) {
  klmm::SimConfig cfg;
  cfg.n_individuals = n;
  cfg.n_snps = m;
  cfg.family_fraction = 0.8;
  cfg.n_causal = 50;
  cfg.heritability = 0.4;
  cfg.seed = 1234;
  return klmm::generate_cohort(cfg);
}

void BM_GenerateCohort(benchmark::State& state) {
  klmm::SimConfig cfg;
  cfg.n_individuals = state.range(0);
  cfg.n_snps = state.range(1);
  cfg.family_fraction = 0.8;
  cfg.n_causal = 50;
  cfg.heritability = 0.4;
  cfg.seed = 99;
  for (auto _ : state) {
    benchmark::DoNotOptimize(klmm::generate_cohort(cfg));
  }
}
BENCHMARK(BM_GenerateCohort)->Args({500, 2000})->Unit(benchmark::kMillisecond);

void BM_BuildRrm(benchmark::State& state) {
  const auto cohort = make_cohort(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(klmm::build_rrm(cohort.genotypes));
  }
}
BENCHMARK(BM_BuildRrm)->Args({500, 2000})->Unit(benchmark::kMillisecond);

void BM_FitVarianceRatio(benchmark::State& state) {
  const auto cohort = make_cohort(state.range(0), state.range(1));
  const auto kernel = klmm::build_rrm(cohort.genotypes);
  const auto grid = klmm::default_delta_grid(100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        klmm::fit_variance_ratio(cohort.phenotype, kernel, grid));
  }
}
BENCHMARK(BM_FitVarianceRatio)->Args({500, 2000})->Unit(benchmark::kMillisecond);

void BM_ScanLmm(benchmark::State& state) {
  const auto cohort = make_cohort(state.range(0), state.range(1));
  const auto kernel = klmm::build_rrm(cohort.genotypes);
  const auto fit = klmm::fit_variance_ratio(cohort.phenotype, kernel,
                                            klmm::default_delta_grid(100));
  klmm::ScanOptions opt;
  opt.exclusion = static_cast<klmm::Exclusion>(state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(klmm::scan_lmm(cohort.phenotype, cohort.genotypes,
                                            kernel, fit.delta, opt));
  }
}
BENCHMARK(BM_ScanLmm)
    ->Args({500, 2000, 0})  // woodbury
    ->Args({500, 2000, 2})  // none
    ->Args({150, 400, 1})   // exact rebuild
    ->Unit(benchmark::kMillisecond);

void BM_DowndateSolve(benchmark::State& state) {
  const auto cohort = make_cohort(state.range(0), state.range(1));
  const auto kernel = klmm::build_rrm(cohort.genotypes);
  klmm::Rng rng(7);
  Eigen::VectorXd rhs(cohort.genotypes.n_individuals());
  for (Eigen::Index i = 0; i < rhs.size(); ++i) rhs[i] = rng.normal();
  const Eigen::VectorXd x = cohort.genotypes.values().col(11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(klmm::downdate_solve(kernel, x, 1.5, rhs));
  }
}
BENCHMARK(BM_DowndateSolve)->Args({500, 2000})->Unit(benchmark::kMicrosecond);

void BM_ScanUnivariate(benchmark::State& state) {
  const auto cohort = make_cohort(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        klmm::scan_univariate(cohort.phenotype, cohort.genotypes));
  }
}
BENCHMARK(BM_ScanUnivariate)->Args({500, 2000})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
