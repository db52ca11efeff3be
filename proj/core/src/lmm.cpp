#include "klmm/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "klmm/parallel.hpp"
#include "klmm/tail_stats.hpp"

namespace klmm {

namespace {

constexpr double kDowndateTol = 1e-12;
constexpr double kConditionLimit = 1e12;
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Model pieces rotated into the kernel eigenbasis. The covariance at ratio
// delta is sigma_g^2 * (diag(S + delta) - c x x^T) in these coordinates;
// quadratic forms under its inverse come from the diagonal solve plus a
// Sherman-Morrison correction:
//   u^T H^{-1} v = u^T A^{-1} v + c (u^T A^{-1} x)(x^T A^{-1} v) / gamma,
//   gamma = 1 - c x^T A^{-1} x,   log|H| = log|A| + log(gamma).
struct RotatedModel {
  const Eigen::VectorXd* eigenvalues = nullptr;
  Eigen::MatrixXd design;  // U^T F
  Eigen::VectorXd y;       // U^T y
  double logdet_gram = 0.0;  // log |F^T F|
  const Eigen::VectorXd* downdate = nullptr;  // U^T x
  double downdate_scale = 0.0;
};

struct RemlEval {
  double loglik = 0.0;
  double rss = 0.0;
  double sigma_g2 = 0.0;
  Eigen::VectorXd beta;
};

double logdet_of_gram(const Eigen::MatrixXd& f) {
  const Eigen::MatrixXd gram = f.transpose() * f;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin <= 0.0) throw SingularDesignError("rank-deficient fixed-effect design");
  return es.eigenvalues().array().log().sum();
}

RemlEval eval_reml(const RotatedModel& m, double delta) {
  const Eigen::VectorXd& s = *m.eigenvalues;
  const Eigen::Index n = s.size();
  const Eigen::Index p = m.design.cols();
  const Eigen::ArrayXd inv_d = 1.0 / (s.array() + delta);

  double q_yy = (m.y.array().square() * inv_d).sum();
  Eigen::VectorXd v = m.design.transpose() * (m.y.array() * inv_d).matrix();
  Eigen::MatrixXd g = m.design.transpose() *
                      (m.design.array().colwise() * inv_d).matrix();
  double logdet_h = -inv_d.log().sum();

  if (m.downdate != nullptr && m.downdate_scale > 0.0) {
    const Eigen::VectorXd& x = *m.downdate;
    const double c = m.downdate_scale;
    const Eigen::ArrayXd x_over_d = x.array() * inv_d;
    const double xax = (x.array() * x_over_d).sum();
    const double gamma = 1.0 - c * xax;
    if (gamma <= kDowndateTol) {
      throw SingularDowndateError("leave-one-out covariance is singular");
    }
    const double s_y = (x_over_d * m.y.array()).sum();
    const Eigen::VectorXd s_f = m.design.transpose() * x_over_d.matrix();
    const double f = c / gamma;
    q_yy += f * s_y * s_y;
    v += f * s_y * s_f;
    g += f * s_f * s_f.transpose();
    logdet_h += std::log1p(-c * xax);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ges(g);
  const double lmin = ges.eigenvalues().minCoeff();
  const double lmax = ges.eigenvalues().maxCoeff();
  if (lmin <= 0.0 || lmax / lmin > kConditionLimit) {
    throw SingularDesignError("ill-conditioned generalized design");
  }
  const double logdet_g = ges.eigenvalues().array().log().sum();

  RemlEval out;
  out.beta = ges.eigenvectors() *
             (ges.eigenvectors().transpose() * v).cwiseQuotient(ges.eigenvalues());
  out.rss = std::max(q_yy - v.dot(out.beta), 0.0);
  const double dof = static_cast<double>(n - p);
  out.sigma_g2 = out.rss / dof;
  const double log_s2 = std::log(std::max(out.sigma_g2, 1e-300));
  // Restricted likelihood of the error contrasts; the |F^T F| term keeps it
  // invariant under reparameterization of the design.
  out.loglik = -0.5 * (dof * (std::log(kTwoPi) + log_s2 + 1.0) + logdet_h +
                       logdet_g - m.logdet_gram);
  return out;
}

RotatedModel rotate_model(const Eigen::VectorXd& y, const Eigen::MatrixXd& fixed,
                          const SpectralKernel& kernel,
                          const Eigen::VectorXd* exclude_snp,
                          Eigen::VectorXd* rotated_exclude_storage) {
  RotatedModel m;
  m.eigenvalues = &kernel.eigenvalues();
  m.design = kernel.eigenvectors().transpose() * fixed;
  m.y = kernel.rotate(y);
  m.logdet_gram = logdet_of_gram(fixed);
  if (exclude_snp != nullptr) {
    *rotated_exclude_storage = kernel.rotate(*exclude_snp);
    m.downdate = rotated_exclude_storage;
    m.downdate_scale = kernel.scale();
  }
  return m;
}

// Golden-section maximization of fn over [lo, hi] (log10-delta coordinates).
// Returns the best probed point.
std::pair<double, double> golden_max(double lo, double hi,
                                     const std::function<double(double)>& fn,
                                     double tol) {
  const double invphi = 0.6180339887498948482;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = fn(x1), f2 = fn(x2);
  double best_t = f1 >= f2 ? x1 : x2;
  double best_f = std::max(f1, f2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = fn(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = fn(x1);
    }
    if (f1 > best_f) {
      best_f = f1;
      best_t = x1;
    }
    if (f2 > best_f) {
      best_f = f2;
      best_t = x2;
    }
  }
  return {best_t, best_f};
}

}  // namespace

const char* to_string(Exclusion e) {
  switch (e) {
    case Exclusion::woodbury: return "woodbury";
    case Exclusion::exact: return "exact";
    case Exclusion::none: return "none";
  }
  return "?";
}

const char* to_string(ScanStatus s) {
  switch (s) {
    case ScanStatus::ok: return "ok";
    case ScanStatus::singular_downdate: return "singular_downdate";
    case ScanStatus::singular_design: return "singular_design";
  }
  return "?";
}

double reml_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& fixed,
                   const SpectralKernel& kernel, double delta,
                   const Eigen::VectorXd* exclude_snp) {
  if (delta <= 0.0) throw Error("reml_loglik requires delta > 0");
  if (y.size() != kernel.size() || fixed.rows() != kernel.size()) {
    throw Error("reml_loglik: dimension mismatch");
  }
  if (fixed.cols() < 1) throw Error("reml_loglik requires at least an intercept");
  Eigen::VectorXd rotated_exclude;
  const RotatedModel m =
      rotate_model(y, fixed, kernel, exclude_snp, &rotated_exclude);
  return eval_reml(m, delta).loglik;
}

std::vector<double> default_delta_grid(int points) {
  if (points < 2) throw Error("delta grid needs at least 2 points");
  std::vector<double> grid(points);
  const double lo = -5.0, hi = 8.0;
  for (int i = 0; i < points; ++i) {
    grid[i] = std::pow(10.0, lo + (hi - lo) * i / (points - 1));
  }
  return grid;
}

namespace {

// Shared grid-then-golden maximizer. Ties (within floating-point noise of
// the maximum, as on flat profiles) resolve to the smallest delta.
template <typename LoglikFn>
std::pair<double, double> maximize_delta(std::span<const double> grid,
                                         const LoglikFn& loglik) {
  if (grid.empty()) throw Error("empty delta grid");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (!(grid[i] < grid[i + 1])) throw Error("delta grid must be strictly increasing");
  }
  std::vector<double> lls(grid.size());
  double max_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    lls[i] = loglik(grid[i]);
    max_ll = std::max(max_ll, lls[i]);
  }
  const double tie_tol = 1e-9 * std::max(1.0, std::fabs(max_ll));
  std::size_t best = 0;
  while (lls[best] < max_ll - tie_tol) ++best;
  double best_ll = lls[best];
  double delta = grid[best];
  if (grid.size() >= 2) {
    const double t_lo = std::log10(grid[best == 0 ? 0 : best - 1]);
    const double t_hi = std::log10(grid[std::min(best + 1, grid.size() - 1)]);
    if (t_hi > t_lo) {
      // Stop once the bracket's relative delta width is below 1e-4.
      const auto [t_best, f_best] = golden_max(
          t_lo, t_hi, [&](double t) { return loglik(std::pow(10.0, t)); },
          1e-4 / 2.302585092994046);
      if (f_best > best_ll + tie_tol) {
        best_ll = f_best;
        delta = std::pow(10.0, t_best);
      }
    }
  }
  return {delta, best_ll};
}

}  // namespace

LmmFit fit_variance_ratio(const Eigen::VectorXd& y, const SpectralKernel& kernel,
                          std::span<const double> grid) {
  const Eigen::Index n = y.size();
  if (n != kernel.size()) throw Error("fit_variance_ratio: dimension mismatch");
  if (n < 2) throw Error("fit_variance_ratio needs at least 2 individuals");

  Eigen::VectorXd unused;
  const RotatedModel m = rotate_model(
      y, Eigen::MatrixXd::Ones(n, 1), kernel, nullptr, &unused);
  const auto [delta, loglik] =
      maximize_delta(grid, [&](double d) { return eval_reml(m, d).loglik; });

  const RemlEval at_best = eval_reml(m, delta);
  LmmFit fit;
  fit.delta = delta;
  fit.sigma_g2 = at_best.sigma_g2;
  fit.sigma_e2 = delta * at_best.sigma_g2;
  fit.fixed_effects = at_best.beta;
  fit.reml_loglik = at_best.loglik;
  fit.dof_residual = n - 1;
  return fit;
}

namespace {

// Quadratic forms among {1, y, x} under H^{-1} for one SNP, plus the
// determinant pieces needed by the per-SNP restricted likelihood.
struct SnpForms {
  double oo, oy, yy, xx, xy, xo;
  double logdet_h;
  bool singular = false;
};

SnpForms compute_forms(const Eigen::VectorXd& s, const Eigen::VectorXd& ones_r,
                       const Eigen::VectorXd& y_r, const Eigen::VectorXd& x_r,
                       double delta, double c) {
  SnpForms f{};
  const Eigen::ArrayXd inv_d = 1.0 / (s.array() + delta);
  const Eigen::ArrayXd xd = x_r.array() * inv_d;
  f.oo = (ones_r.array().square() * inv_d).sum();
  f.oy = (ones_r.array() * y_r.array() * inv_d).sum();
  f.yy = (y_r.array().square() * inv_d).sum();
  f.xx = (x_r.array() * xd).sum();
  f.xy = (y_r.array() * xd).sum();
  f.xo = (ones_r.array() * xd).sum();
  f.logdet_h = -inv_d.log().sum();
  if (c > 0.0) {
    const double gamma = 1.0 - c * f.xx;
    if (gamma <= kDowndateTol) {
      f.singular = true;
      return f;
    }
    const double w = c / gamma;
    f.oo += w * f.xo * f.xo;
    f.oy += w * f.xo * f.xy;
    f.yy += w * f.xy * f.xy;
    const double xx0 = f.xx;
    f.xy += w * xx0 * f.xy;
    f.xo += w * xx0 * f.xo;
    f.xx += w * xx0 * xx0;
    f.logdet_h += std::log1p(-c * xx0);
  }
  return f;
}

struct SnpTest {
  double beta = std::numeric_limits<double>::quiet_NaN();
  double f_stat = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  ScanStatus status = ScanStatus::ok;
};

// F test of the slope from the GLS residual drop between the intercept-only
// and [1, x] designs at fixed delta.
SnpTest f_test_from_forms(const SnpForms& f, Eigen::Index n) {
  SnpTest t;
  if (f.singular) {
    t.status = ScanStatus::singular_downdate;
    return t;
  }
  const double tr = f.oo + f.xx;
  const double det = f.oo * f.xx - f.xo * f.xo;
  const double disc = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
  const double lmin = 0.5 * (tr - disc);
  const double lmax = 0.5 * (tr + disc);
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) {
    t.status = ScanStatus::singular_design;
    return t;
  }
  const double rss0 = std::max(f.yy - f.oy * f.oy / f.oo, 0.0);
  const double b_x = (f.oo * f.xy - f.xo * f.oy) / det;
  const double b_o = (f.xx * f.oy - f.xo * f.xy) / det;
  const double rss1 = std::max(f.yy - (b_o * f.oy + b_x * f.xy), 0.0);
  const double dof = static_cast<double>(n - 2);
  t.beta = b_x;
  if (rss1 <= 0.0) {
    t.f_stat = std::numeric_limits<double>::infinity();
  } else {
    t.f_stat = std::max((rss0 - rss1) / (rss1 / dof), 0.0);
  }
  t.p_value = std::max(f_upper_tail(t.f_stat, 1, static_cast<int>(n - 2)),
                       kPValueFloor);
  return t;
}

// Per-SNP restricted log-likelihood for the [1, x] design, used by the
// refit-per-SNP mode.
double snp_reml(const SnpForms& f, Eigen::Index n, double logdet_gram) {
  if (f.singular) throw SingularDowndateError("singular downdate");
  const double det = f.oo * f.xx - f.xo * f.xo;
  if (!(det > 0.0)) throw SingularDesignError("singular design");
  const double b_x = (f.oo * f.xy - f.xo * f.oy) / det;
  const double b_o = (f.xx * f.oy - f.xo * f.xy) / det;
  const double rss = std::max(f.yy - (b_o * f.oy + b_x * f.xy), 0.0);
  const double dof = static_cast<double>(n - 2);
  const double s2 = std::max(rss / dof, 1e-300);
  return -0.5 * (dof * (std::log(kTwoPi) + std::log(s2) + 1.0) + f.logdet_h +
                 std::log(det) - logdet_gram);
}

}  // namespace

AssociationScan scan_lmm(const Eigen::VectorXd& y, const GenotypeMatrix& g,
                         const SpectralKernel& kernel, double delta,
                         const ScanOptions& options) {
  if (!g.standardized()) throw Error("scan_lmm requires standardized genotypes");
  const Eigen::Index n = g.n_individuals();
  const Eigen::Index m = g.n_snps();
  if (y.size() != n || kernel.size() != n) throw Error("scan_lmm: dimension mismatch");
  if (n < 3) throw Error("scan_lmm needs at least 3 individuals");
  if (!options.refit_per_snp && delta <= 0.0) throw Error("scan_lmm requires delta > 0");

  const Eigen::MatrixXd& x_all = g.values();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd y_r = kernel.rotate(y);
  const Eigen::VectorXd ones_r = kernel.rotate(ones);
  const double c = options.exclusion == Exclusion::woodbury ? kernel.scale() : 0.0;
  const std::vector<double> grid =
      options.refit_per_snp ? default_delta_grid(options.grid_points)
                            : std::vector<double>{};

  // Exact mode rebuilds the leave-one-out kernel from the genotype matrix
  // and refactorizes; the dense base is shared across SNPs.
  Eigen::MatrixXd base_dense;
  if (options.exclusion == Exclusion::exact) {
    base_dense = dense_rrm(g);
  }

  AssociationScan scan;
  scan.method = "lmm";
  scan.results.resize(m);

  parallel_for(m, options.threads, [&](long j) {
    AssociationResult& out = scan.results[j];
    out.snp_index = j;
    const Eigen::VectorXd x = x_all.col(j);

    const Eigen::VectorXd* s_ptr = &kernel.eigenvalues();
    Eigen::VectorXd s_local, yr_local, or_local, xr_local;
    double snp_c = c;
    if (options.exclusion == Exclusion::exact) {
      Eigen::MatrixXd k_j = base_dense;
      k_j.selfadjointView<Eigen::Lower>().rankUpdate(x, -kernel.scale());
      k_j.triangularView<Eigen::StrictlyUpper>() =
          k_j.triangularView<Eigen::StrictlyLower>().transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k_j);
      s_local = es.eigenvalues().cwiseMax(0.0);
      yr_local = es.eigenvectors().transpose() * y;
      or_local = es.eigenvectors().transpose() * ones;
      xr_local = es.eigenvectors().transpose() * x;
      s_ptr = &s_local;
      snp_c = 0.0;
    } else {
      xr_local = kernel.rotate(x);
    }
    const Eigen::VectorXd& s = *s_ptr;
    const Eigen::VectorXd& yr = options.exclusion == Exclusion::exact ? yr_local : y_r;
    const Eigen::VectorXd& onesr = options.exclusion == Exclusion::exact ? or_local : ones_r;

    double snp_delta = delta;
    if (options.refit_per_snp) {
      const double sx = x.sum();
      const double sxx = x.squaredNorm();
      const double logdet_gram = std::log(static_cast<double>(n) * sxx - sx * sx);
      try {
        snp_delta = maximize_delta(grid, [&](double d) {
                      return snp_reml(
                          compute_forms(s, onesr, yr, xr_local, d, snp_c), n,
                          logdet_gram);
                    }).first;
      } catch (const SingularDowndateError&) {
        out.status = ScanStatus::singular_downdate;
        out.beta_hat = out.f_statistic = out.p_value =
            std::numeric_limits<double>::quiet_NaN();
        return;
      } catch (const SingularDesignError&) {
        out.status = ScanStatus::singular_design;
        out.beta_hat = out.f_statistic = out.p_value =
            std::numeric_limits<double>::quiet_NaN();
        return;
      }
    }

    const SnpForms forms = compute_forms(s, onesr, yr, xr_local, snp_delta, snp_c);
    const SnpTest t = f_test_from_forms(forms, n);
    out.beta_hat = t.beta;
    out.f_statistic = t.f_stat;
    out.p_value = t.p_value;
    out.status = t.status;
  });
  return scan;
}

AssociationScan scan_univariate(const Eigen::VectorXd& y,
                                const GenotypeMatrix& g, UnivariateStat stat,
                                int threads) {
  if (!g.standardized()) throw Error("scan_univariate requires standardized genotypes");
  const Eigen::Index n = g.n_individuals();
  const Eigen::Index m = g.n_snps();
  if (y.size() != n) throw Error("scan_univariate: dimension mismatch");
  if (n < 3) throw Error("scan_univariate needs at least 3 individuals");

  const Eigen::MatrixXd& x_all = g.values();
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  const double rss0 = yc.squaredNorm();

  AssociationScan scan;
  scan.method = "univariate";
  scan.results.resize(m);

  parallel_for(m, threads, [&](long j) {
    AssociationResult& out = scan.results[j];
    out.snp_index = j;
    const auto x = x_all.col(j);
    const double sxx = x.squaredNorm();  // = N by standardization
    const double sxy = x.dot(yc);
    const double slope = sxy / sxx;
    const double rss1 = std::max(rss0 - sxy * sxy / sxx, 0.0);
    out.beta_hat = slope;
    double p;
    if (stat == UnivariateStat::lrt) {
      const double lrt = rss1 > 0.0
                             ? static_cast<double>(n) * std::log(rss0 / rss1)
                             : std::numeric_limits<double>::infinity();
      out.f_statistic = std::max(lrt, 0.0);
      p = chi2_upper_tail(out.f_statistic, 1);
    } else {
      const double dof = static_cast<double>(n - 2);
      const double f = rss1 > 0.0 ? std::max((rss0 - rss1) / (rss1 / dof), 0.0)
                                  : std::numeric_limits<double>::infinity();
      out.f_statistic = f;
      p = f_upper_tail(f, 1, static_cast<int>(n - 2));
    }
    out.p_value = std::max(p, kPValueFloor);
  });
  return scan;
}

}  // namespace klmm
