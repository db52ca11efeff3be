#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

#include "klmm/errors.hpp"

namespace klmm {

using GenotypeCounts =
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// N x M matrix of per-individual allele counts in {0,1,2}, one column per
/// SNP. Raw counts are kept as 8-bit integers; standardization promotes a
/// copy to doubles (column mean 0, variance 1 under the 1/N convention) and
/// records the original column means and standard deviations.
class GenotypeMatrix {
 public:
  GenotypeMatrix() = default;
  explicit GenotypeMatrix(GenotypeCounts raw);

  Eigen::Index n_individuals() const { return raw_.rows(); }
  Eigen::Index n_snps() const { return raw_.cols(); }

  const GenotypeCounts& raw() const { return raw_; }
  bool standardized() const { return standardized_; }

  /// Standardized values; only valid after standardize().
  const Eigen::MatrixXd& values() const;
  const Eigen::VectorXd& col_means() const;
  const Eigen::VectorXd& col_stds() const;

  friend GenotypeMatrix standardize(const GenotypeMatrix& g);

 private:
  GenotypeCounts raw_;
  Eigen::MatrixXd values_;
  Eigen::VectorXd col_means_;
  Eigen::VectorXd col_stds_;
  bool standardized_ = false;
};

/// Returns a standardized copy. Column statistics are accumulated in exact
/// integer arithmetic, so results do not depend on row order and
/// monomorphic columns are detected exactly.
/// Throws MonomorphicColumnError for the first zero-variance column.
GenotypeMatrix standardize(const GenotypeMatrix& g);

/// In-place mean-0/variance-1 transform of an arbitrary real column (1/N
/// convention). Returns {mean, std} of the input. Throws
/// MonomorphicColumnError on zero variance.
std::pair<double, double> standardize_column(Eigen::Ref<Eigen::VectorXd> col);

}  // namespace klmm
