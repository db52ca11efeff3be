#include "klmm/calibrate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "klmm/errors.hpp"
#include "klmm/tail_stats.hpp"

namespace klmm {

std::vector<double> default_alpha_grid(int points) {
  if (points < 2) throw Error("alpha grid needs at least 2 points");
  std::vector<double> grid(points);
  const double lo = std::log10(1e-4), hi = std::log10(0.5);
  for (int i = 0; i < points; ++i) {
    grid[i] = std::pow(10.0, lo + (hi - lo) * i / (points - 1));
  }
  return grid;
}

std::vector<double> fpr_curve(std::span<const double> pvals,
                              std::span<const double> alpha_grid) {
  if (pvals.empty()) throw EmptyInputError("fpr_curve: no p-values");
  std::vector<double> sorted(pvals.begin(), pvals.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(alpha_grid.size());
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    // Inclusive threshold: count p <= alpha.
    const auto it =
        std::upper_bound(sorted.begin(), sorted.end(), alpha_grid[i]);
    out[i] = static_cast<double>(it - sorted.begin()) /
             static_cast<double>(sorted.size());
  }
  return out;
}

Band calibrated_band(double alpha, std::size_t n_tests, double level) {
  if (n_tests < 1) throw DomainError("calibrated_band: n_tests must be >= 1");
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw DomainError("calibrated_band: alpha must lie in (0, 1)");
  }
  if (!(level > 0.0) || !(level < 1.0)) {
    throw DomainError("calibrated_band: level must lie in (0, 1)");
  }
  const double n = static_cast<double>(n_tests);
  const double expected = alpha * n;
  const double tail = 0.5 * (1.0 - level);

  // Exact binomial (Clopper-Pearson) acceptance interval around the
  // expected count; the ceil/floor pair generalizes the integer tails to
  // fractional expected counts.
  const double k_lo = std::ceil(expected);
  double low = 0.0;
  if (k_lo > 0.0) low = reg_inc_beta_inv(k_lo, n - k_lo + 1.0, tail);
  const double k_hi = std::floor(expected);
  double high = 1.0;
  if (k_hi < n) high = reg_inc_beta_inv(k_hi + 1.0, n - k_hi, 1.0 - tail);

  // The acceptance region under calibration always contains its own mean.
  return {std::min(low, alpha), std::max(high, alpha)};
}

namespace {

// Exact P(D_n < d) by the Marsaglia-Tsang-Wang matrix method.
double ks_cdf_exact(int n, double d) {
  const double t = n * d;
  if (t <= 0.0) return 0.0;
  if (t >= n) return 1.0;
  const int k = static_cast<int>(std::ceil(t));
  const int m = 2 * k - 1;
  const double h = k - t;

  Eigen::MatrixXd mat(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      mat(i, j) = (i - j + 1 < 0) ? 0.0 : 1.0;
    }
  }
  for (int i = 0; i < m; ++i) {
    mat(i, 0) -= std::pow(h, i + 1);
    mat(m - 1, i) -= std::pow(h, m - i);
  }
  mat(m - 1, 0) += (2.0 * h - 1.0 > 0.0) ? std::pow(2.0 * h - 1.0, m) : 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i - j + 1 > 0) {
        for (int g = 1; g <= i - j + 1; ++g) mat(i, j) /= g;
      }
    }
  }

  // mat^n with power-of-two scaling to keep entries in range.
  int exponent = 0;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd base = mat;
  int e = n;
  auto renorm = [m](Eigen::MatrixXd& a, int& exp10) {
    const double center = a((m - 1) / 2, (m - 1) / 2);
    if (center > 1e140) {
      a *= 1e-140;
      exp10 += 140;
    }
  };
  int base_exp = 0;
  while (e > 0) {
    if (e & 1) {
      power = power * base;
      exponent += base_exp;
      renorm(power, exponent);
    }
    base = base * base;
    base_exp *= 2;
    renorm(base, base_exp);
    e >>= 1;
  }

  double s = power(k - 1, k - 1);
  for (int i = 1; i <= n; ++i) {
    s *= static_cast<double>(i) / n;
    if (s < 1e-140) {
      s *= 1e140;
      exponent -= 140;
    }
  }
  return s * std::pow(10.0, exponent);
}

// Asymptotic Kolmogorov survival function Q(lambda).
double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Small-lambda theta-function form converges faster and avoids
    // cancellation in 1 - CDF.
    const double pi2 = 9.869604401089358;  // pi^2
    double sum = 0.0;
    for (int j = 1; j <= 20; ++j) {
      const double term =
          std::exp(-(2.0 * j - 1.0) * (2.0 * j - 1.0) * pi2 / (8.0 * lambda * lambda));
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return 1.0 - std::sqrt(2.0 * 3.141592653589793) / lambda * sum;
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

KsResult ks_uniformity(std::span<const double> pvals) {
  if (pvals.empty()) throw EmptyInputError("ks_uniformity: no p-values");
  std::vector<double> sorted(pvals.begin(), pvals.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double dn = static_cast<double>(n);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(sorted[i], 0.0, 1.0);
    d = std::max(d, (static_cast<double>(i) + 1.0) / dn - p);
    d = std::max(d, p - static_cast<double>(i) / dn);
  }
  KsResult out;
  out.statistic = d;
  if (n < 35) {
    out.p_value = std::clamp(1.0 - ks_cdf_exact(static_cast<int>(n), d), 0.0, 1.0);
  } else {
    out.p_value = kolmogorov_q(std::sqrt(dn) * d);
  }
  return out;
}

const MethodCalibration* CalibrationReport::find(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

MethodCalibration aggregate(std::span<const DatasetPvals> datasets,
                            const std::string& method,
                            std::span<const double> alpha_grid, double level,
                            double min_inside_fraction, double min_ks_p) {
  std::vector<double> pooled;
  std::size_t missing = 0;
  for (const auto& ds : datasets) {
    if (ds.method != method) continue;
    pooled.insert(pooled.end(), ds.pvals.begin(), ds.pvals.end());
    missing += ds.n_missing;
  }
  if (pooled.empty()) {
    throw EmptyInputError("aggregate: no p-values for method " + method);
  }

  MethodCalibration out;
  out.method = method;
  out.n_tests = pooled.size();
  out.n_missing = missing;
  out.fpr = fpr_curve(pooled, alpha_grid);
  out.ci_low.resize(alpha_grid.size());
  out.ci_high.resize(alpha_grid.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    const Band band = calibrated_band(alpha_grid[i], out.n_tests, level);
    out.ci_low[i] = band.low;
    out.ci_high[i] = band.high;
    if (out.fpr[i] >= band.low && out.fpr[i] <= band.high) ++inside;
  }
  out.inside_band_fraction =
      alpha_grid.empty() ? 0.0
                         : static_cast<double>(inside) /
                               static_cast<double>(alpha_grid.size());
  const KsResult ks = ks_uniformity(pooled);
  out.ks_statistic = ks.statistic;
  out.ks_p = ks.p_value;
  out.pass_inside = out.inside_band_fraction >= min_inside_fraction;
  out.pass_ks = out.ks_p > min_ks_p;
  out.pass = out.pass_inside && out.pass_ks;
  return out;
}

CalibrationReport build_report(std::span<const DatasetPvals> datasets,
                               std::span<const double> alpha_grid, double level,
                               double min_inside_fraction, double min_ks_p) {
  CalibrationReport report;
  report.alpha_grid.assign(alpha_grid.begin(), alpha_grid.end());
  report.level = level;
  report.min_inside_fraction = min_inside_fraction;
  report.min_ks_p = min_ks_p;
  std::vector<std::string> methods;
  for (const auto& ds : datasets) {
    if (std::find(methods.begin(), methods.end(), ds.method) == methods.end()) {
      methods.push_back(ds.method);
    }
  }
  for (const auto& m : methods) {
    report.methods.push_back(
        aggregate(datasets, m, alpha_grid, level, min_inside_fraction, min_ks_p));
  }
  return report;
}

}  // namespace klmm
