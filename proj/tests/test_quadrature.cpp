#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiflux/errors.hpp"
#include "equiflux/quadrature.hpp"

using namespace equiflux;

namespace {
double tri_monomial(int p, int q) {
  auto fact = [](int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  return fact(p) * fact(q) / fact(p + q + 2);
}
}  // namespace

TEST_CASE("degree 1 is the centroid rule") {
  const QuadratureRule r = quadrature_rule(1);
  REQUIRE(r.size() == 1);
  CHECK(r.weights[0] == doctest::Approx(1.0));
  CHECK(r.points[0][0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("degree 2 rule: 3 symmetric interior points, weights 1/3") {
  const QuadratureRule r = quadrature_rule(2);
  REQUIRE(r.size() == 3);
  for (double w : r.weights) CHECK(w == doctest::Approx(1.0 / 3.0));
  // exactness on the three quadratic monomials
  double ix2 = 0.0, ixy = 0.0, iy2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double x = r.points[i][1], y = r.points[i][2];
    ix2 += 0.5 * r.weights[i] * x * x;
    ixy += 0.5 * r.weights[i] * x * y;
    iy2 += 0.5 * r.weights[i] * y * y;
  }
  CHECK(ix2 == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
  CHECK(ixy == doctest::Approx(1.0 / 24.0).epsilon(1e-14));
  CHECK(iy2 == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
}

TEST_CASE("all supported degrees pass the construction self-test") {
  for (int d = 1; d <= 20; ++d) {
    const QuadratureRule r = quadrature_rule(d);
    CHECK(r.exact_degree >= d);
    double wsum = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
    // symmetry: first barycentric moments all equal
    double m[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < r.size(); ++i)
      for (int c = 0; c < 3; ++c) m[c] += r.weights[i] * r.points[i][c];
    CHECK(m[0] == doctest::Approx(m[1]).epsilon(1e-13));
    CHECK(m[1] == doctest::Approx(m[2]).epsilon(1e-13));
  }
}

TEST_CASE("unsupported degrees are rejected") {
  CHECK_THROWS_AS(quadrature_rule(0), UnsupportedDegree);
  CHECK_THROWS_AS(quadrature_rule(21), UnsupportedDegree);
}

TEST_CASE("high-degree exactness spot check") {
  const QuadratureRule r = quadrature_rule(17);
  double val = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    val += 0.5 * r.weights[i] * std::pow(r.points[i][1], 9) *
           std::pow(r.points[i][2], 8);
  CHECK(val == doctest::Approx(tri_monomial(9, 8)).epsilon(1e-12));
}

TEST_CASE("segment rules integrate polynomials") {
  const SegmentRule& r = segment_rule(6);
  double val = 0.0;
  for (std::size_t i = 0; i < r.points.size(); ++i)
    val += r.weights[i] * std::pow(r.points[i], 10);
  CHECK(val == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
}

TEST_CASE("adaptive integration") {
  const Vec2 a{0, 0}, b{1, 0}, c{0, 1};
  SUBCASE("constant") {
    CHECK(integrate_adaptive([](Vec2) { return 1.0; }, a, b, c, 1e-10) ==
          doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("x^2") {
    CHECK(integrate_adaptive([](Vec2 p) { return p.x * p.x; }, a, b, c, 1e-10) ==
          doctest::Approx(1.0 / 12.0).epsilon(1e-13));
  }
  SUBCASE("boundary layer against a tighter-tolerance run") {
    auto f = [](Vec2 p) { return std::exp(-100.0 * (1.0 - p.x)); };
    const double loose = integrate_adaptive(f, a, b, c, 1e-10);
    const double tight = integrate_adaptive(f, a, b, c, 1e-12);
    CHECK(std::abs(loose - tight) <= 1e-9 * std::abs(tight));
  }
  SUBCASE("discontinuity never converges to machine tolerance") {
    auto f = [](Vec2 p) { return p.x > 0.34319 ? 1.0 : 0.0; };
    CHECK_THROWS_AS(integrate_adaptive(f, a, b, c, 1e-15, 14), MaxDepthExceeded);
  }
}
