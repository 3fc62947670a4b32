#pragma once

#include <array>
#include <functional>
#include <vector>

#include "equiflux/geometry.hpp"

namespace equiflux {

/// Quadrature rule on the reference triangle, stored in barycentric
/// coordinates. Weights sum to one; the integral over a physical element K
/// is |K| * sum_i w_i f(x_i).
struct QuadratureRule {
  std::vector<std::array<double, 3>> points;  // (l0, l1, l2)
  std::vector<double> weights;
  int exact_degree = 0;

  std::size_t size() const { return weights.size(); }
};

/// Symmetric rule exact for polynomials of total degree `degree` (1..20).
/// Every rule is self-tested at construction against the closed-form monomial
/// integrals on the reference triangle; failure raises UnsupportedDegree.
QuadratureRule quadrature_rule(int degree);

/// Cached version of quadrature_rule (rules are immutable).
const QuadratureRule& cached_rule(int degree);

/// Gauss-Legendre rule on [0,1] with n points (exact degree 2n-1). Cached.
struct SegmentRule {
  std::vector<double> points;
  std::vector<double> weights;  // sum to 1
};
const SegmentRule& segment_rule(int n_points);

/// Integral of f over the triangle (a, b, c).
template <class F>
double integrate_triangle(const QuadratureRule& rule, const Vec2& a, const Vec2& b,
                          const Vec2& c, F&& f) {
  const double area = 0.5 * std::abs(signed_area2(a, b, c));
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const auto& l = rule.points[q];
    const Vec2 x = a * l[0] + b * l[1] + c * l[2];
    sum += rule.weights[q] * f(x);
  }
  return area * sum;
}

/// Integral of g over the segment [p0, p1].
template <class G>
double integrate_segment(const SegmentRule& rule, const Vec2& p0, const Vec2& p1, G&& g) {
  const double len = distance(p0, p1);
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const Vec2 x = p0 + (p1 - p0) * rule.points[q];
    sum += rule.weights[q] * g(x);
  }
  return len * sum;
}

/// Adaptive integration over the triangle (a, b, c): recursive uniform
/// 4-subdivision with a degree-10 rule per cell until two successive levels
/// agree within rel_tol; returns the finer estimate. Throws MaxDepthExceeded
/// beyond `max_depth` subdivision levels. A positive abs_tol additionally
/// stops the refinement once the summed disagreement falls below it (used by
/// callers that aggregate many element integrals and know the global scale).
double integrate_adaptive(const std::function<double(Vec2)>& f, const Vec2& a,
                          const Vec2& b, const Vec2& c, double rel_tol,
                          int max_depth = 20, double abs_tol = 0.0);

}  // namespace equiflux
