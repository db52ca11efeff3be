#include "klmm/genotype_matrix.hpp"

#include <cmath>
#include <cstdint>

namespace klmm {

GenotypeMatrix::GenotypeMatrix(GenotypeCounts raw) : raw_(std::move(raw)) {
  for (Eigen::Index j = 0; j < raw_.cols(); ++j) {
    for (Eigen::Index i = 0; i < raw_.rows(); ++i) {
      if (raw_(i, j) > 2) {
        throw Error("allele count out of range at (" + std::to_string(i) +
                    "," + std::to_string(j) + "): " +
                    std::to_string(int(raw_(i, j))));
      }
    }
  }
}

const Eigen::MatrixXd& GenotypeMatrix::values() const {
  if (!standardized_) throw Error("genotype matrix is not standardized");
  return values_;
}

const Eigen::VectorXd& GenotypeMatrix::col_means() const {
  if (!standardized_) throw Error("genotype matrix is not standardized");
  return col_means_;
}

const Eigen::VectorXd& GenotypeMatrix::col_stds() const {
  if (!standardized_) throw Error("genotype matrix is not standardized");
  return col_stds_;
}

GenotypeMatrix standardize(const GenotypeMatrix& g) {
  if (g.standardized()) throw Error("genotype matrix already standardized");
  const Eigen::Index n = g.n_individuals();
  const Eigen::Index m = g.n_snps();
  if (n == 0 || m == 0) throw Error("cannot standardize an empty matrix");

  GenotypeMatrix out;
  out.raw_ = g.raw();
  out.values_.resize(n, m);
  out.col_means_.resize(m);
  out.col_stds_.resize(m);

  const double dn = static_cast<double>(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    // Integer sums are exact, so the variance is row-order independent and
    // monomorphic columns are an exact zero test.
    std::int64_t s = 0, s2 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::int64_t v = g.raw()(i, j);
      s += v;
      s2 += v * v;
    }
    const std::int64_t var_numer = n * s2 - s * s;
    if (var_numer == 0) throw MonomorphicColumnError(j);
    const double mean = static_cast<double>(s) / dn;
    const double var = static_cast<double>(var_numer) / (dn * dn);
    const double sd = std::sqrt(var);
    out.col_means_[j] = mean;
    out.col_stds_[j] = sd;
    out.values_.col(j) =
        (g.raw().col(j).cast<double>().array() - mean) / sd;
  }
  out.standardized_ = true;
  return out;
}

std::pair<double, double> standardize_column(Eigen::Ref<Eigen::VectorXd> col) {
  const Eigen::Index n = col.size();
  if (n == 0) throw Error("cannot standardize an empty column");
  const double mean = col.mean();
  const double var = (col.array() - mean).square().sum() / static_cast<double>(n);
  if (var == 0.0) throw MonomorphicColumnError(-1);
  const double sd = std::sqrt(var);
  col = (col.array() - mean) / sd;
  return {mean, sd};
}

}  // namespace klmm
