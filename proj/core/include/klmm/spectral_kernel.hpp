#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>

#include "klmm/genotype_matrix.hpp"

namespace klmm {

/// Similarity kernel held as its spectral factorization K = U diag(S) U^T
/// with eigenvalues sorted nonincreasing and clamped at zero. `scale` is the
/// per-SNP column normalization that was applied (1/M for an RRM built from
/// M SNPs), which is also the coefficient of a single SNP's rank-one
/// contribution x x^T to the kernel.
class SpectralKernel {
 public:
  SpectralKernel() = default;
  SpectralKernel(Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors,
                 double scale, Eigen::Index source_snp_count);

  Eigen::Index size() const { return eigenvectors_.rows(); }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  double scale() const { return scale_; }
  Eigen::Index source_snp_count() const { return source_snp_count_; }

  /// Dense reconstruction U diag(S) U^T.
  Eigen::MatrixXd dense() const;

  /// U^T v: coordinates of v in the eigenbasis.
  Eigen::VectorXd rotate(const Eigen::VectorXd& v) const;

 private:
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  double scale_ = 0.0;
  Eigen::Index source_snp_count_ = 0;
};

/// Dense realized relationship matrix (1/M') X' X'^T over the included
/// columns, where X' drops `exclude` and M' counts the remaining SNPs.
/// Throws EmptyKernelError if every column is excluded.
Eigen::MatrixXd dense_rrm(const GenotypeMatrix& g,
                          std::span<const Eigen::Index> exclude = {});

/// Spectral factorization of dense_rrm(g, exclude). Eigenvalues in
/// [-1e-8, 0) are clamped to zero; anything lower throws NumericError.
SpectralKernel build_rrm(const GenotypeMatrix& g,
                         std::span<const Eigen::Index> exclude = {});

/// (K + delta I)^{-1} rhs through the eigenbasis.
Eigen::VectorXd kernel_solve(const SpectralKernel& k, double delta,
                             const Eigen::VectorXd& rhs);

struct DowndateSolve {
  Eigen::VectorXd solution;
  double logdet_correction = 0.0;
};

/// Rank-one leave-one-SNP-out solve: computes
///   (K - c x x^T + delta I)^{-1} rhs
/// and the log-determinant change log(1 - c x^T (K + delta I)^{-1} x),
/// both through the kernel eigenbasis (O(N^2) per call, no
/// refactorization). `snp_column` must be a standardized column that was
/// included when the kernel was built; c defaults to the kernel scale.
/// Throws SingularDowndateError when 1 - c x^T A^{-1} x <= 1e-12.
DowndateSolve downdate_solve(const SpectralKernel& k,
                             const Eigen::VectorXd& snp_column, double delta,
                             const Eigen::VectorXd& rhs,
                             std::optional<double> scale_override = std::nullopt);

}  // namespace klmm
