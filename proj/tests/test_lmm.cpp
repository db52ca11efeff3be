#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "klmm/errors.hpp"
#include "klmm/lmm.hpp"
#include "klmm/rng.hpp"
#include "klmm/simulate.hpp"
#include "klmm/spectral_kernel.hpp"
#include "klmm/tail_stats.hpp"
#include "oracles.hpp"

using namespace klmm;

namespace {

double rel_diff(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

SpectralKernel zero_kernel(Eigen::Index n) {
  return SpectralKernel(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n),
                        0.0, 0);
}

}  // namespace

TEST_CASE("spectral REML matches the dense error-contrast oracle") {
  Rng rng(101);
  for (int rep = 0; rep < 12; ++rep) {
    const Eigen::Index n = 30 + static_cast<Eigen::Index>(rng.uniform_int(170));
    const Eigen::Index m = n / 2 + static_cast<Eigen::Index>(rng.uniform_int(2 * n));
    const GenotypeMatrix g = oracle::random_standardized(n, m, rng);
    const SpectralKernel k = build_rrm(g);
    const Eigen::MatrixXd dense = dense_rrm(g);
    const double delta = std::pow(10.0, rng.uniform(-3.0, 3.0));

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();

    // Intercept-only design.
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
    CHECK(rel_diff(reml_loglik(y, ones, k, delta),
                   oracle::dense_reml_loglik(y, ones, dense, delta)) < 1e-8);

    // Intercept plus test SNP, with and without the leave-one-out downdate.
    const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform_int(m));
    Eigen::MatrixXd design(n, 2);
    design.col(0).setOnes();
    design.col(1) = g.values().col(j);
    const Eigen::VectorXd x = g.values().col(j);
    CHECK(rel_diff(reml_loglik(y, design, k, delta),
                   oracle::dense_reml_loglik(y, design, dense, delta)) < 1e-8);
    CHECK(rel_diff(
              reml_loglik(y, design, k, delta, &x),
              oracle::dense_reml_loglik(y, design, dense, delta, &x, k.scale())) <
          1e-8);
  }
}

TEST_CASE("adding a constant to y does not move the restricted likelihood") {
  Rng rng(103);
  const GenotypeMatrix g = oracle::random_standardized(60, 90, rng);
  const SpectralKernel k = build_rrm(g);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) y[i] = rng.normal();
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(60, 1);
  const double base = reml_loglik(y, ones, k, 0.8);
  const Eigen::VectorXd shifted = y.array() + 17.5;
  CHECK(rel_diff(base, reml_loglik(shifted, ones, k, 0.8)) < 1e-10);
}

TEST_CASE("zero kernel reduces the restricted likelihood to OLS") {
  Rng rng(107);
  const Eigen::Index n = 80;
  const GenotypeMatrix g = oracle::random_standardized(n, 5, rng);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal() + 0.3;
  const SpectralKernel zk = zero_kernel(n);

  const Eigen::MatrixXd f0 = Eigen::MatrixXd::Ones(n, 1);
  Eigen::MatrixXd f1(n, 2);
  f1.col(0).setOnes();
  f1.col(1) = g.values().col(2);

  // With K = 0 the likelihood is delta-free.
  const double l0 = reml_loglik(y, f0, zk, 1.0);
  const double l1 = reml_loglik(y, f1, zk, 1.0);
  CHECK(rel_diff(l0, reml_loglik(y, f0, zk, 1e5)) < 1e-9);

  // Invert l = -0.5 (N-p)(log(2 pi RSS/(N-p)) + 1) for the residual sums,
  // then the implied F statistic must be the OLS one.
  auto implied_rss = [n](double l, Eigen::Index p) {
    const double dof = static_cast<double>(n - p);
    return dof / (2.0 * 3.14159265358979323846) *
           std::exp(-2.0 * l / dof - 1.0);
  };
  const double rss0 = implied_rss(l0, 1);
  const double rss1 = implied_rss(l1, 2);

  const Eigen::VectorXd yc = y.array() - y.mean();
  const double ols_rss0 = yc.squaredNorm();
  const Eigen::VectorXd x = g.values().col(2);
  const double ols_rss1 = ols_rss0 - std::pow(x.dot(yc), 2) / x.squaredNorm();
  const double f_implied = (rss0 - rss1) / (rss1 / static_cast<double>(n - 2));
  const double f_ols = (ols_rss0 - ols_rss1) / (ols_rss1 / static_cast<double>(n - 2));
  CHECK(f_implied == doctest::Approx(f_ols).epsilon(1e-9));
}

TEST_CASE("flat profiles resolve to the smallest delta") {
  const Eigen::Index n = 24;
  Rng rng(109);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
  const std::vector<double> grid = default_delta_grid(20);
  const LmmFit fit = fit_variance_ratio(y, zero_kernel(n), grid);
  CHECK(fit.delta == grid.front());
  CHECK(fit.sigma_e2 == doctest::Approx(fit.delta * fit.sigma_g2).epsilon(1e-10));
  CHECK(fit.dof_residual == n - 1);
  CHECK(std::isfinite(fit.reml_loglik));
}

TEST_CASE("variance ratio fit recovers heritability in a family cohort") {
  SimConfig cfg;
  cfg.n_individuals = 800;
  cfg.n_snps = 2000;
  cfg.family_fraction = 0.8;
  cfg.n_causal = 100;
  cfg.heritability = 0.5;
  cfg.seed = 424242;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const std::vector<double> grid = default_delta_grid(100);
  const LmmFit fit = fit_variance_ratio(cohort.phenotype, k, grid);
  const double h2 = fit.sigma_g2 / (fit.sigma_g2 + fit.sigma_e2);
  CHECK(h2 > 0.3);
  CHECK(h2 < 0.7);
}

TEST_CASE("variance ratio fit finds no heritability in pure noise") {
  SimConfig cfg;
  cfg.n_individuals = 2000;
  cfg.n_snps = 2000;
  cfg.family_fraction = 0.5;
  cfg.n_causal = 0;
  cfg.heritability = 0.0;
  cfg.seed = 515151;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const LmmFit fit =
      fit_variance_ratio(cohort.phenotype, k, default_delta_grid(100));
  const double h2 = fit.sigma_g2 / (fit.sigma_g2 + fit.sigma_e2);
  CHECK(h2 < 0.05);
}

TEST_CASE("woodbury and exact exclusion agree per SNP") {
  SimConfig cfg;
  cfg.n_individuals = 300;
  cfg.n_snps = 1000;
  cfg.family_fraction = 0.7;
  cfg.n_causal = 30;
  cfg.heritability = 0.4;
  cfg.seed = 616161;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const LmmFit fit =
      fit_variance_ratio(cohort.phenotype, k, default_delta_grid(100));

  ScanOptions fast;
  fast.exclusion = Exclusion::woodbury;
  fast.threads = 2;
  ScanOptions slow;
  slow.exclusion = Exclusion::exact;
  slow.threads = 2;
  const AssociationScan a = scan_lmm(cohort.phenotype, cohort.genotypes, k,
                                     fit.delta, fast);
  const AssociationScan b = scan_lmm(cohort.phenotype, cohort.genotypes, k,
                                     fit.delta, slow);
  REQUIRE(a.results.size() == b.results.size());
  double max_dp = 0.0;
  for (std::size_t j = 0; j < a.results.size(); ++j) {
    REQUIRE(a.results[j].status == ScanStatus::ok);
    REQUIRE(b.results[j].status == ScanStatus::ok);
    max_dp = std::max(max_dp,
                      std::fabs(a.results[j].p_value - b.results[j].p_value));
  }
  CHECK(max_dp < 1e-6);
}

TEST_CASE("forcing delta to the grid top degenerates to the OLS F test") {
  SimConfig cfg;
  cfg.n_individuals = 200;
  cfg.n_snps = 400;
  cfg.family_fraction = 0.6;
  cfg.n_causal = 10;
  cfg.heritability = 0.3;
  cfg.seed = 717171;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const double top = default_delta_grid(100).back();

  ScanOptions opt;
  opt.exclusion = Exclusion::none;
  const AssociationScan lmm =
      scan_lmm(cohort.phenotype, cohort.genotypes, k, top, opt);
  const AssociationScan ols =
      scan_univariate(cohort.phenotype, cohort.genotypes, UnivariateStat::ftest);
  for (std::size_t j = 0; j < lmm.results.size(); ++j) {
    CHECK(std::fabs(lmm.results[j].p_value - ols.results[j].p_value) < 1e-6);
  }
}

TEST_CASE("scan results are scale and permutation equivariant") {
  SimConfig cfg;
  cfg.n_individuals = 150;
  cfg.n_snps = 250;
  cfg.family_fraction = 0.5;
  cfg.n_causal = 10;
  cfg.heritability = 0.4;
  cfg.seed = 818181;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const LmmFit fit =
      fit_variance_ratio(cohort.phenotype, k, default_delta_grid(100));
  const AssociationScan base =
      scan_lmm(cohort.phenotype, cohort.genotypes, k, fit.delta);

  SUBCASE("scaling y rescales the variance components only") {
    const double c = 3.25;
    const Eigen::VectorXd scaled = c * cohort.phenotype;
    const LmmFit fit2 = fit_variance_ratio(scaled, k, default_delta_grid(100));
    CHECK(fit2.sigma_g2 == doctest::Approx(c * c * fit.sigma_g2).epsilon(1e-4));
    CHECK(fit2.sigma_e2 == doctest::Approx(c * c * fit.sigma_e2).epsilon(1e-4));
    const AssociationScan scaled_scan =
        scan_lmm(scaled, cohort.genotypes, k, fit2.delta);
    for (std::size_t j = 0; j < base.results.size(); ++j) {
      CHECK(std::fabs(scaled_scan.results[j].p_value - base.results[j].p_value) <
            1e-9);
    }
  }

  SUBCASE("permuting individuals leaves p-values unchanged") {
    const Eigen::Index n = cfg.n_individuals;
    Rng rng(99);
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
    }
    GenotypeCounts praw(n, cfg.n_snps);
    Eigen::VectorXd py(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      praw.row(i) = cohort.genotypes.raw().row(perm[i]);
      py[i] = cohort.phenotype[perm[i]];
    }
    const GenotypeMatrix pg = standardize(GenotypeMatrix(std::move(praw)));
    const SpectralKernel pk = build_rrm(pg);
    const AssociationScan pscan = scan_lmm(py, pg, pk, fit.delta);
    for (std::size_t j = 0; j < base.results.size(); ++j) {
      CHECK(std::fabs(pscan.results[j].p_value - base.results[j].p_value) < 1e-9);
    }
  }

  SUBCASE("p-values decrease strictly in F within the scan") {
    std::vector<const AssociationResult*> sorted;
    for (const auto& r : base.results) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
      return a->f_statistic < b->f_statistic;
    });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i]->f_statistic > sorted[i - 1]->f_statistic + 1e-12) {
        CHECK(sorted[i]->p_value < sorted[i - 1]->p_value);
      }
    }
  }
}

TEST_CASE("refit-per-SNP stays close to the shared-ratio scan") {
  SimConfig cfg;
  cfg.n_individuals = 120;
  cfg.n_snps = 60;
  cfg.family_fraction = 0.5;
  cfg.n_causal = 5;
  cfg.heritability = 0.4;
  cfg.seed = 919191;
  const SimulatedCohort cohort = generate_cohort(cfg);
  const SpectralKernel k = build_rrm(cohort.genotypes);
  const LmmFit fit =
      fit_variance_ratio(cohort.phenotype, k, default_delta_grid(60));
  ScanOptions refit;
  refit.refit_per_snp = true;
  refit.grid_points = 60;
  const AssociationScan a =
      scan_lmm(cohort.phenotype, cohort.genotypes, k, fit.delta, refit);
  const AssociationScan b =
      scan_lmm(cohort.phenotype, cohort.genotypes, k, fit.delta);
  for (std::size_t j = 0; j < a.results.size(); ++j) {
    CHECK(a.results[j].status == ScanStatus::ok);
    // Same test statistic family; the refit may move delta, so only a loose
    // agreement is expected.
    CHECK(std::fabs(std::log10(a.results[j].p_value) -
                    std::log10(b.results[j].p_value)) < 1.0);
  }
}

TEST_CASE("singular downdates become sentinel rows, not scan failures") {
  Rng rng(121);
  const GenotypeMatrix g = oracle::random_standardized(20, 1, rng);
  const SpectralKernel k = build_rrm(g);  // scale 1, K = x x^T
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y[i] = rng.normal();
  const AssociationScan scan = scan_lmm(y, g, k, 1e-13);
  REQUIRE(scan.results.size() == 1);
  CHECK(scan.results[0].status == ScanStatus::singular_downdate);
  CHECK(std::isnan(scan.results[0].p_value));
}

TEST_CASE("rank-deficient designs are a typed error") {
  Rng rng(131);
  const GenotypeMatrix g = oracle::random_standardized(25, 10, rng);
  const SpectralKernel k = build_rrm(g);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) y[i] = rng.normal();
  Eigen::MatrixXd design(25, 2);
  design.col(0).setOnes();
  design.col(1).setOnes();  // duplicate column
  CHECK_THROWS_AS(reml_loglik(y, design, k, 1.0), SingularDesignError);
}

TEST_CASE("univariate scan handles a perfect fit with the p-value floor") {
  Rng rng(123);
  const GenotypeMatrix g = oracle::random_standardized(50, 8, rng);
  const Eigen::VectorXd y = g.values().col(4);
  const AssociationScan scan = scan_univariate(y, g);
  CHECK(scan.results[4].p_value == kPValueFloor);
  CHECK(scan.results[4].f_statistic ==
        std::numeric_limits<double>::infinity());
  const AssociationScan fscan = scan_univariate(y, g, UnivariateStat::ftest);
  CHECK(fscan.results[4].p_value == kPValueFloor);
}

TEST_CASE("univariate LRT matches its closed form") {
  Rng rng(127);
  const Eigen::Index n = 70;
  const GenotypeMatrix g = oracle::random_standardized(n, 10, rng);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.normal();
  const AssociationScan scan = scan_univariate(y, g);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double rss0 = yc.squaredNorm();
  for (Eigen::Index j = 0; j < 10; ++j) {
    const Eigen::VectorXd x = g.values().col(j);
    const double rss1 = rss0 - std::pow(x.dot(yc), 2) / x.squaredNorm();
    const double lrt = n * std::log(rss0 / rss1);
    CHECK(scan.results[j].f_statistic == doctest::Approx(lrt).epsilon(1e-12));
    CHECK(scan.results[j].p_value ==
          doctest::Approx(chi2_upper_tail(lrt, 1)).epsilon(1e-12));
  }
}
