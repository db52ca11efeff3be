#include "klmm/spectral_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "klmm/errors.hpp"

namespace klmm {

namespace {
constexpr double kEigenvalueFloor = -1e-8;
constexpr double kDowndateTol = 1e-12;
}  // namespace

SpectralKernel::SpectralKernel(Eigen::VectorXd eigenvalues,
                               Eigen::MatrixXd eigenvectors, double scale,
                               Eigen::Index source_snp_count)
    : eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)),
      scale_(scale),
      source_snp_count_(source_snp_count) {
  if (eigenvalues_.size() != eigenvectors_.rows() ||
      eigenvectors_.rows() != eigenvectors_.cols()) {
    throw Error("inconsistent spectral kernel dimensions");
  }
}

Eigen::MatrixXd SpectralKernel::dense() const {
  return eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
}

Eigen::VectorXd SpectralKernel::rotate(const Eigen::VectorXd& v) const {
  return eigenvectors_.transpose() * v;
}

Eigen::MatrixXd dense_rrm(const GenotypeMatrix& g,
                          std::span<const Eigen::Index> exclude) {
  if (!g.standardized()) throw Error("dense_rrm requires standardized genotypes");
  const Eigen::Index n = g.n_individuals();
  const Eigen::Index m = g.n_snps();

  std::unordered_set<Eigen::Index> dropped;
  for (Eigen::Index j : exclude) {
    if (j < 0 || j >= m) throw Error("exclusion index out of range");
    dropped.insert(j);
  }
  const Eigen::Index m_kept = m - static_cast<Eigen::Index>(dropped.size());
  if (m_kept == 0) throw EmptyKernelError("all SNP columns excluded");

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  const double scale = 1.0 / static_cast<double>(m_kept);
  if (dropped.empty()) {
    k.selfadjointView<Eigen::Lower>().rankUpdate(g.values(), scale);
  } else {
    Eigen::MatrixXd kept(n, m_kept);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!dropped.count(j)) kept.col(c++) = g.values().col(j);
    }
    k.selfadjointView<Eigen::Lower>().rankUpdate(kept, scale);
  }
  k.triangularView<Eigen::StrictlyUpper>() =
      k.triangularView<Eigen::StrictlyLower>().transpose();
  return k;
}

SpectralKernel build_rrm(const GenotypeMatrix& g,
                         std::span<const Eigen::Index> exclude) {
  const Eigen::MatrixXd k = dense_rrm(g, exclude);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  if (es.info() != Eigen::Success) {
    throw NumericError("kernel eigendecomposition failed");
  }
  // Eigen returns ascending order; flip to nonincreasing.
  Eigen::VectorXd evals = es.eigenvalues().reverse();
  Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
  if (evals.minCoeff() < kEigenvalueFloor) {
    throw NumericError("kernel eigenvalue below tolerance: " +
                       std::to_string(evals.minCoeff()));
  }
  evals = evals.cwiseMax(0.0);

  std::unordered_set<Eigen::Index> dropped(exclude.begin(), exclude.end());
  const Eigen::Index m_kept =
      g.n_snps() - static_cast<Eigen::Index>(dropped.size());
  return SpectralKernel(std::move(evals), std::move(evecs),
                        1.0 / static_cast<double>(m_kept), m_kept);
}

Eigen::VectorXd kernel_solve(const SpectralKernel& k, double delta,
                             const Eigen::VectorXd& rhs) {
  if (delta <= 0.0) throw Error("kernel_solve requires delta > 0");
  const Eigen::VectorXd d = k.eigenvalues().array() + delta;
  const Eigen::VectorXd rotated = k.rotate(rhs);
  return k.eigenvectors() * (rotated.array() / d.array()).matrix();
}

DowndateSolve downdate_solve(const SpectralKernel& k,
                             const Eigen::VectorXd& snp_column, double delta,
                             const Eigen::VectorXd& rhs,
                             std::optional<double> scale_override) {
  if (delta <= 0.0) throw Error("downdate_solve requires delta > 0");
  const double c = scale_override.value_or(k.scale());
  if (c < 0.0) throw Error("downdate scale must be nonnegative");

  const Eigen::ArrayXd d = k.eigenvalues().array() + delta;
  const Eigen::VectorXd x = k.rotate(snp_column);
  const Eigen::VectorXd r = k.rotate(rhs);

  const Eigen::ArrayXd x_over_d = x.array() / d;
  const double xax = (x.array() * x_over_d).sum();  // x^T A^{-1} x
  const double gamma = 1.0 - c * xax;
  if (c > 0.0 && gamma <= kDowndateTol) {
    throw SingularDowndateError("leave-one-out covariance is singular (1 - c x^T A^{-1} x = " +
                                std::to_string(gamma) + ")");
  }

  // Sherman-Morrison: (A - c x x^T)^{-1} r = A^{-1} r + c (x^T A^{-1} r)/gamma * A^{-1} x
  const double xar = (x.array() * (r.array() / d)).sum();
  Eigen::ArrayXd w = r.array() / d;
  if (c > 0.0) w += (c * xar / gamma) * x_over_d;

  DowndateSolve out;
  out.solution = k.eigenvectors() * w.matrix();
  out.logdet_correction = std::log1p(-c * xax);
  return out;
}

}  // namespace klmm
