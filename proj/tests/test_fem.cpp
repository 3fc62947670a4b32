#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "equiflux/errors.hpp"
#include "equiflux/fem.hpp"
#include "equiflux/problems.hpp"

using namespace equiflux;

namespace {

Mesh ref_triangle(double kappa = 0.0) {
  const std::vector<Vec2> v{{0, 0}, {1, 0}, {0, 1}};
  return build_mesh(v, {{{0, 1, 2}, 0}},
                    {{0, 1, BoundaryLabel::dirichlet},
                     {1, 2, BoundaryLabel::dirichlet},
                     {2, 0, BoundaryLabel::dirichlet}},
                    [kappa](Vec2) { return kappa; });
}

ProblemSpec pure_neumann_square(double kappa, ScalarField f) {
  ProblemSpec spec;
  spec.id = "test";
  spec.kappa = [kappa](Vec2) { return kappa; };
  spec.source = std::move(f);
  spec.neumann = [](Vec2) { return 0.0; };
  const KappaRule kr = spec.kappa;
  spec.initial_mesh = [kr]() {
    return two_triangle_square({-1, -1}, {1, 1},
                               [](Vec2) { return BoundaryLabel::neumann; }, kr);
  };
  return spec;
}

}  // namespace

TEST_CASE("dofmap constrains exactly the Dirichlet closure") {
  const ProblemSpec spec = sinsin_spec(8);
  const Mesh mesh = spec.initial_mesh();
  const DofMap dm = build_dofmap(mesh);
  CHECK(dm.n_free() == 49);
  CHECK(dm.dirichlet_nodes.size() == 32);
  for (int n : dm.free_nodes) {
    const Vec2 p = mesh.vertices[n];
    CHECK(p.x > 0.0);
    CHECK(p.x < 1.0);
    CHECK(p.y > 0.0);
    CHECK(p.y < 1.0);
  }
}

TEST_CASE("assemble rejects fully constrained and ill-posed problems") {
  ProblemSpec spec = sinsin_spec(1);  // 2x2 nodes, all on the boundary
  const Mesh mesh = spec.initial_mesh();
  CHECK_THROWS_AS(assemble(mesh, spec), EmptySystem);

  ProblemSpec bad = pure_neumann_square(0.0, [](Vec2) { return 0.0; });
  const Mesh m2 = bad.initial_mesh();
  CHECK_THROWS_AS(assemble(m2, bad), Error);
}

TEST_CASE("zero data gives the zero solution") {
  const ProblemSpec spec = pure_neumann_square(1.0, [](Vec2) { return 0.0; });
  const Mesh mesh = spec.initial_mesh();
  const SparseSystem sys = assemble(mesh, spec);
  const P1Solution u = solve_cg(mesh, sys);
  for (double v : u.nodal) CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("constant solution is reproduced exactly") {
  // f = kappa^2 with kappa = 1 and pure Neumann: u = 1 lies in the space
  const ProblemSpec spec = pure_neumann_square(1.0, [](Vec2) { return 1.0; });
  const Mesh mesh = spec.initial_mesh();
  const SparseSystem sys = assemble(mesh, spec);
  const P1Solution u = solve_cg(mesh, sys);
  for (double v : u.nodal) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("manufactured solution converges at first order in energy") {
  double prev = 0.0;
  for (int n : {8, 16, 32}) {
    const ProblemSpec spec = sinsin_spec(n);
    const Mesh mesh = spec.initial_mesh();
    const P1Solution u = solve_cg(mesh, assemble(mesh, spec));
    const double err = exact_error(mesh, u, spec, 1e-8);
    if (prev > 0.0) {
      const double rate = std::log2(prev / err);
      CHECK(rate == doctest::Approx(1.0).epsilon(0.1));
      CHECK(err < prev);  // best-approximation monotonicity
    }
    prev = err;
  }
}

TEST_CASE("cg on tiny systems") {
  {
    CsrMatrix a(std::vector<std::vector<std::pair<int, double>>>{{{0, 2.0}}});
    const auto x = cg_solve(a, {4.0});
    CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-14));
  }
  {
    std::vector<std::vector<std::pair<int, double>>> rows(3);
    for (int i = 0; i < 3; ++i) rows[i] = {{i, 1.0}};
    CsrMatrix a(rows);
    const auto x = cg_solve(a, {1.0, -2.0, 3.0});
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(-2.0));
    CHECK(x[2] == doctest::Approx(3.0));
  }
}

TEST_CASE("cg agrees with a dense factorization oracle") {
  const ProblemSpec spec = sinsin_spec(8);
  const Mesh mesh = spec.initial_mesh();
  const SparseSystem sys = assemble(mesh, spec);
  const int n = sys.dofs.n_free();
  Eigen::MatrixXd dense(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dense(i, j) = sys.matrix.coeff(i, j);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) rhs(i) = sys.rhs[i];
  const Eigen::VectorXd ref = dense.ldlt().solve(rhs);
  const auto x = cg_solve(sys.matrix, sys.rhs, 1e-13);
  for (int i = 0; i < n; ++i)
    CHECK(x[i] == doctest::Approx(ref(i)).epsilon(1e-10));
}

TEST_CASE("cg reports non-convergence") {
  const ProblemSpec spec = sinsin_spec(8);
  const Mesh mesh = spec.initial_mesh();
  const SparseSystem sys = assemble(mesh, spec);
  CHECK_THROWS_AS(cg_solve(sys.matrix, sys.rhs, 1e-14, 2), NoConvergence);
}

TEST_CASE("galerkin residual") {
  const ProblemSpec spec = sinsin_spec(8);
  const Mesh mesh = spec.initial_mesh();
  const SparseSystem sys = assemble(mesh, spec);
  P1Solution u = solve_cg(mesh, sys, 1e-12);
  double rhs_norm = 0.0;
  for (double v : sys.rhs) rhs_norm = std::max(rhs_norm, std::abs(v));
  CHECK(galerkin_residual(u, sys) <= 1e-10 * rhs_norm);

  // perturbing one free node changes the residual by the matrix column
  const int node = sys.dofs.free_nodes[10];
  u.nodal[node] += 1.0;
  double col_max = 0.0;
  for (int d = 0; d < sys.dofs.n_free(); ++d)
    col_max = std::max(col_max, std::abs(sys.matrix.coeff(d, 10)));
  CHECK(galerkin_residual(u, sys) == doctest::Approx(col_max).epsilon(1e-10));

  // zero data: zero residual
  const ProblemSpec zero = pure_neumann_square(1.0, [](Vec2) { return 0.0; });
  const Mesh m2 = zero.initial_mesh();
  const P1Solution u0{std::vector<double>(m2.n_vertices(), 0.0)};
  CHECK(galerkin_residual(m2, u0, zero) == 0.0);
}

TEST_CASE("element projection onto affine functions") {
  const Mesh mesh = ref_triangle();
  SUBCASE("affine functions are fixed points") {
    const AffineOnTri p =
        project_affine_element([](Vec2 x) { return 3.0 - 2.0 * x.x + 0.5 * x.y; },
                               mesh, 0);
    CHECK(p({0.2, 0.3}) == doctest::Approx(3.0 - 0.4 + 0.15).epsilon(1e-13));
    CHECK(p.grad().x == doctest::Approx(-2.0).epsilon(1e-13));
    CHECK(p.grad().y == doctest::Approx(0.5).epsilon(1e-13));
  }
  SUBCASE("x^2 projects to -1/10 + 4x/5") {
    const AffineOnTri p =
        project_affine_element([](Vec2 x) { return x.x * x.x; }, mesh, 0);
    for (Vec2 q : {Vec2{0.1, 0.1}, Vec2{0.5, 0.25}, Vec2{0.3, 0.6}})
      CHECK(p(q) == doctest::Approx(-0.1 + 0.8 * q.x).epsilon(1e-12));
  }
  SUBCASE("orthogonality of the residual against affine test functions") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      double c[15];
      for (double& ci : c) ci = coef(rng);
      auto f = [&](Vec2 p) {
        double val = 0.0;
        int idx = 0;
        for (int i = 0; i <= 4; ++i)
          for (int j = 0; i + j <= 4; ++j)
            val += c[idx++] * std::pow(p.x, i) * std::pow(p.y, j);
        return val;
      };
      const AffineOnTri pf = project_affine_element(f, mesh, 0);
      const QuadratureRule& rule = cached_rule(10);
      for (int q = 0; q < 3; ++q) {
        const double orth = integrate_triangle(
            rule, mesh.vertices[0], mesh.vertices[1], mesh.vertices[2], [&](Vec2 x) {
              const double test = q == 0 ? 1.0 : (q == 1 ? x.x : x.y);
              return (f(x) - pf(x)) * test;
            });
        CHECK(std::abs(orth) <= 1e-12);
      }
    }
  }
  SUBCASE("idempotence") {
    auto f = [](Vec2 p) { return std::sin(p.x) + p.y * p.y; };
    const AffineOnTri p1 = project_affine_element(f, mesh, 0);
    const AffineOnTri p2 =
        project_affine_element([&](Vec2 x) { return p1(x); }, mesh, 0);
    CHECK(p2.a == doctest::Approx(p1.a).epsilon(1e-13));
    CHECK(p2.bx == doctest::Approx(p1.bx).epsilon(1e-13));
    CHECK(p2.by == doctest::Approx(p1.by).epsilon(1e-13));
  }
}

TEST_CASE("facet projection onto affine functions of arclength") {
  const Mesh mesh = ref_triangle();
  // facet 0 of element 0 in build order: find the unit facet on the x-axis
  int fx = -1;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const auto& fc = mesh.facets[f];
    if (mesh.vertices[fc.v[0]].y == 0.0 && mesh.vertices[fc.v[1]].y == 0.0) fx = f;
  }
  REQUIRE(fx >= 0);
  SUBCASE("linear in arclength is a fixed point") {
    const AffineOnSeg p =
        project_affine_facet([](Vec2 x) { return 2.0 + 3.0 * x.x; }, mesh, fx);
    CHECK(p.a == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(p.b == doctest::Approx(3.0).epsilon(1e-13));
  }
  SUBCASE("s^2 on the unit segment projects to s - 1/6") {
    const AffineOnSeg p =
        project_affine_facet([](Vec2 x) { return x.x * x.x; }, mesh, fx);
    CHECK(p.a == doctest::Approx(-1.0 / 6.0).epsilon(1e-13));
    CHECK(p.b == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("zero projects to zero") {
    const AffineOnSeg p = project_affine_facet([](Vec2) { return 0.0; }, mesh, fx);
    CHECK(p.a == 0.0);
    CHECK(p.b == 0.0);
  }
}

TEST_CASE("energy norms") {
  SUBCASE("zero field") {
    const Mesh mesh = ref_triangle(1.0);
    CHECK(energy_norm(mesh, [](Vec2) { return 0.0; },
                      [](Vec2) { return Vec2{0, 0}; }) == 0.0);
  }
  SUBCASE("v = x with kappa = 1 on the unit right triangle") {
    const Mesh mesh = ref_triangle(1.0);
    const double e = energy_norm(mesh, [](Vec2 p) { return p.x; },
                                 [](Vec2) { return Vec2{1, 0}; });
    CHECK(e == doctest::Approx(std::sqrt(7.0 / 12.0)).epsilon(1e-13));
  }
  SUBCASE("v = x with kappa = 0") {
    const Mesh mesh = ref_triangle(0.0);
    const double e = energy_norm(mesh, [](Vec2 p) { return p.x; },
                                 [](Vec2) { return Vec2{1, 0}; });
    CHECK(e == doctest::Approx(std::sqrt(0.5)).epsilon(1e-13));
  }
  SUBCASE("p1 closed form agrees with quadrature and is elementwise additive") {
    const ProblemSpec spec = layer_problem_spec(3.0, 4);
    const Mesh mesh = spec.initial_mesh();
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> nodal(mesh.n_vertices());
    for (double& v : nodal) v = u(rng);
    const P1Solution sol{nodal};
    const double exact = energy_norm_p1(mesh, nodal);
    // via generic quadrature, element by element
    double sum = 0.0;
    const QuadratureRule& rule = cached_rule(4);
    for (int k = 0; k < mesh.n_elements(); ++k) {
      const auto& el = mesh.elements[k];
      const double k2 = el.kappa * el.kappa;
      sum += integrate_triangle(rule, mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                                mesh.vertices[el.v[2]], [&](Vec2 x) {
                                  const Vec2 g = sol.gradient(mesh, k);
                                  const double v = sol.value(mesh, k, x);
                                  return dot(g, g) + k2 * v * v;
                                });
    }
    CHECK(exact == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));
  }
}
