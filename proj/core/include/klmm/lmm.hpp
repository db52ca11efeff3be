#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "klmm/genotype_matrix.hpp"
#include "klmm/spectral_kernel.hpp"

namespace klmm {

/// Variance-component fit of y ~ N(F b, sigma_g^2 (K + delta I)) with
/// delta = sigma_e^2 / sigma_g^2 profiled by restricted maximum likelihood.
struct LmmFit {
  double delta = 0.0;
  double sigma_g2 = 0.0;
  double sigma_e2 = 0.0;
  Eigen::VectorXd fixed_effects;
  double reml_loglik = 0.0;
  Eigen::Index dof_residual = 0;
};

/// Profiled restricted log-likelihood at a fixed variance ratio delta.
/// `fixed` is the N x p design (intercept included by the caller); if
/// `exclude_snp` is given, the kernel is corrected by the rank-one
/// leave-one-out downdate -scale * x x^T before evaluating.
/// Throws SingularDesignError / SingularDowndateError.
double reml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& fixed,
                   const SpectralKernel& kernel, double delta,
                   const Eigen::VectorXd* exclude_snp = nullptr);

/// Logarithmically spaced delta grid on [1e-5, 1e8].
std::vector<double> default_delta_grid(int points = 100);

/// Grid search over delta (intercept-only design) followed by
/// golden-section refinement inside the bracketing cell, down to relative
/// width 1e-4. Ties resolve to the smallest delta.
LmmFit fit_variance_ratio(const Eigen::VectorXd& y,
                          const SpectralKernel& kernel,
                          std::span<const double> grid);

enum class Exclusion { woodbury, exact, none };
enum class UnivariateStat { lrt, ftest };
enum class ScanStatus { ok, singular_downdate, singular_design };

const char* to_string(Exclusion e);
const char* to_string(ScanStatus s);

struct AssociationResult {
  Eigen::Index snp_index = 0;
  double beta_hat = 0.0;
  double f_statistic = 0.0;
  double p_value = 1.0;
  ScanStatus status = ScanStatus::ok;
};

struct AssociationScan {
  std::string method;
  std::vector<AssociationResult> results;
};

struct ScanOptions {
  Exclusion exclusion = Exclusion::woodbury;
  bool refit_per_snp = false;
  int grid_points = 100;
  int threads = 1;
};

inline constexpr double kPValueFloor = 1e-300;

/// Per-SNP mixed-model association scan at a shared variance ratio. For
/// each SNP j the design is [1, x_j], the kernel is corrected per
/// `options.exclusion`, the fixed effects and sigma_g^2 are estimated in
/// closed form, and the F statistic is the GLS residual sum-of-squares drop
/// between the intercept-only and full designs:
///   F = (RSS0 - RSS1) / (RSS1 / (N - 2)),  P = upper tail of F(1, N-2).
/// SNPs whose leave-one-out covariance is singular are reported with a
/// non-ok status instead of aborting the scan.
AssociationScan scan_lmm(const Eigen::VectorXd& y, const GenotypeMatrix& g,
                         const SpectralKernel& kernel, double delta,
                         const ScanOptions& options = {});

/// Ordinary least squares baseline y ~ [1, x_j] per SNP. The default
/// statistic is the likelihood ratio 2(l1 - l0) = N log(RSS0/RSS1) with a
/// chi-square(1) tail; `ftest` uses the OLS F test with F(1, N-2).
AssociationScan scan_univariate(const Eigen::VectorXd& y,
                                const GenotypeMatrix& g,
                                UnivariateStat stat = UnivariateStat::lrt,
                                int threads = 1);

}  // namespace klmm
