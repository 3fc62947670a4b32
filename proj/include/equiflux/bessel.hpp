#pragma once

namespace equiflux {

/// Scaled modified Bessel function of the first kind, I_alpha(x) e^{-x},
/// for alpha > -1 and x >= 0. Power series up to x = 30, uniform
/// large-argument asymptotic expansion beyond; relative accuracy ~1e-12.
double bessel_i_scaled(double alpha, double x);

/// I_alpha(kappa rho) / I_alpha(kappa) for rho in [0, 1], evaluated through
/// scaled values so that kappa up to 1e6 stays in range.
double bessel_ratio(double alpha, double kappa, double rho);

}  // namespace equiflux
