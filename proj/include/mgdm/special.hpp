#pragma once

// Scalar special functions shared by the process models. Exposed for tests.

namespace mgdm::detail {

/// Power series for log I_nu(z), summed outward from its largest term.
double log_bessel_i_series(double nu, double z);
/// Hankel large-argument expansion of log I_nu(z).
double log_bessel_i_asymptotic(double nu, double z);

/// log P(Z > a) for standard normal Z.
double log_normal_tail(double a);
/// phi(a) / P(Z > a).
double inverse_mills(double a);
/// inverse_mills(a) - a, without cancellation for large a.
double inverse_mills_excess(double a);

}  // namespace mgdm::detail
