#include "equiflux/bessel.hpp"

#include <cmath>
#include <limits>

#include "equiflux/errors.hpp"

namespace equiflux {

namespace {

double series_scaled(double alpha, double x) {
  // I_alpha(x) = (x/2)^alpha sum_m (x^2/4)^m / (m! Gamma(m+alpha+1))
  const double x2 = 0.25 * x * x;
  double term = std::pow(0.5 * x, alpha) / std::tgamma(alpha + 1.0);
  double sum = term;
  for (int m = 1; m <= 400; ++m) {
    term *= x2 / (m * (m + alpha));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum * std::exp(-x);
}

double asymptotic_scaled(double alpha, double x) {
  // I_alpha(x) e^{-x} ~ (2 pi x)^{-1/2} [1 - (mu-1)/(8x) + ...], mu = 4 alpha^2
  const double mu = 4.0 * alpha * alpha;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 30; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (8.0 * k * x);
    if (std::abs(next) >= std::abs(term)) break;  // past the optimal truncation
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum / std::sqrt(2.0 * M_PI * x);
}

}  // namespace

double bessel_i_scaled(double alpha, double x) {
  if (!(alpha > -1.0)) throw Error("bessel_i_scaled: order must exceed -1");
  if (!(x >= 0.0)) throw Error("bessel_i_scaled: argument must be >= 0");
  if (x == 0.0) {
    if (alpha == 0.0) return 1.0;
    return alpha > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return x <= 30.0 ? series_scaled(alpha, x) : asymptotic_scaled(alpha, x);
}

double bessel_ratio(double alpha, double kappa, double rho) {
  if (!(kappa > 0.0)) throw Error("bessel_ratio: kappa must be > 0");
  if (rho <= 0.0) return alpha > 0.0 ? 0.0 : 1.0;
  if (rho >= 1.0) return 1.0;
  const double num = bessel_i_scaled(alpha, kappa * rho);
  const double den = bessel_i_scaled(alpha, kappa);
  return num / den * std::exp(kappa * (rho - 1.0));
}

}  // namespace equiflux
