#pragma once

namespace klmm {

/// Regularized incomplete beta function I_x(a, b).
double reg_inc_beta(double a, double b, double x);

/// Inverse of I_x(a, b) in x for p in [0, 1].
double reg_inc_beta_inv(double a, double b, double p);

/// Regularized upper incomplete gamma function Q(a, x).
double reg_upper_gamma(double a, double x);

/// Upper tail of the F(d1, d2) distribution at x >= 0.
/// Throws DomainError for negative or NaN x.
double f_upper_tail(double x, int d1, int d2);

/// Upper tail of the chi-square distribution with k degrees of freedom.
/// Throws DomainError for negative or NaN x.
double chi2_upper_tail(double x, int k);

}  // namespace klmm
