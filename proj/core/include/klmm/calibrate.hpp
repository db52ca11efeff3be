#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace klmm {

/// Logarithmically spaced thresholds on [1e-4, 0.5].
std::vector<double> default_alpha_grid(int points = 50);

/// Fraction of p-values <= alpha (inclusive threshold) per grid point.
/// Throws EmptyInputError.
std::vector<double> fpr_curve(std::span<const double> pvals,
                              std::span<const double> alpha_grid);

struct Band {
  double low = 0.0;
  double high = 1.0;
};

/// Acceptance band for the empirical false-positive rate under calibrated
/// p-values: the Clopper-Pearson exact interval for a Binomial(n_tests,
/// alpha) proportion, evaluated at the expected count n_tests*alpha
/// (non-integer counts use the ceil/floor binomial tail convention). The
/// band always contains alpha.
Band calibrated_band(double alpha, std::size_t n_tests, double level = 0.95);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against Uniform(0,1). Exact
/// distribution (matrix method) for n < 35, asymptotic Kolmogorov series
/// otherwise. Throws EmptyInputError.
KsResult ks_uniformity(std::span<const double> pvals);

struct MethodCalibration {
  std::string method;
  std::size_t n_tests = 0;    // successful non-causal tests pooled
  std::size_t n_missing = 0;  // sentinel-status tests, kept explicit
  std::vector<double> fpr;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  double ks_statistic = 0.0;
  double ks_p = 1.0;
  double inside_band_fraction = 0.0;
  bool pass_inside = false;
  bool pass_ks = false;
  bool pass = false;
};

struct CalibrationReport {
  std::vector<double> alpha_grid;
  double level = 0.95;
  double min_inside_fraction = 0.90;
  double min_ks_p = 1e-3;
  std::vector<MethodCalibration> methods;

  const MethodCalibration* find(const std::string& method) const;
};

/// Non-causal p-values of one dataset under one method.
struct DatasetPvals {
  std::string method;
  std::vector<double> pvals;
  std::size_t n_missing = 0;
};

/// Pools p-values across datasets for one method (pooling, not averaging of
/// per-dataset curves) and recomputes the curve, bands, and KS test.
MethodCalibration aggregate(std::span<const DatasetPvals> datasets,
                            const std::string& method,
                            std::span<const double> alpha_grid,
                            double level = 0.95,
                            double min_inside_fraction = 0.90,
                            double min_ks_p = 1e-3);

/// aggregate() over every method present in the inputs, in first-seen order.
CalibrationReport build_report(std::span<const DatasetPvals> datasets,
                               std::span<const double> alpha_grid,
                               double level = 0.95,
                               double min_inside_fraction = 0.90,
                               double min_ks_p = 1e-3);

}  // namespace klmm
