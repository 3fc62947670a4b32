#include "equiflux/problems.hpp"

#include <cmath>
#include <map>
#include <memory>

#include "equiflux/bessel.hpp"
#include "equiflux/errors.hpp"

namespace equiflux {

Mesh uniform_square_mesh(Vec2 lo, Vec2 hi, int nx, int ny, const BoundaryRule& label,
                         const KappaRule& kappa) {
  if (nx < 1 || ny < 1) throw Error("uniform_square_mesh: need nx, ny >= 1");
  std::vector<Vec2> verts;
  verts.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      verts.push_back({lo.x + (hi.x - lo.x) * i / nx, lo.y + (hi.y - lo.y) * j / ny});
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };

  std::vector<TriangleSpec> tris;
  tris.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      tris.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}, 0});
      tris.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}, 0});
    }
  }

  std::vector<BoundarySpec> bnd;
  auto mark = [&](int a, int b) {
    bnd.push_back({a, b, label((verts[a] + verts[b]) * 0.5)});
  };
  for (int i = 0; i < nx; ++i) {
    mark(id(i, 0), id(i + 1, 0));
    mark(id(i, ny), id(i + 1, ny));
  }
  for (int j = 0; j < ny; ++j) {
    mark(id(0, j), id(0, j + 1));
    mark(id(nx, j), id(nx, j + 1));
  }
  return build_mesh(verts, tris, bnd, kappa);
}

Mesh two_triangle_square(Vec2 lo, Vec2 hi, const BoundaryRule& label,
                         const KappaRule& kappa) {
  return uniform_square_mesh(lo, hi, 1, 1, label, kappa);
}

Mesh sector_polygon_mesh(int segments, const KappaRule& kappa) {
  if (segments < 8) throw Error("sector_polygon_mesh: need at least 8 arc segments");
  const int s = segments;
  // Angular doubling levels: innermost fan keeps 8..15 sectors when the
  // segment count allows halving, otherwise a plain fan.
  int levels = 0;
  while ((s >> (levels + 1)) >= 8 && s % (1 << (levels + 1)) == 0) ++levels;

  const double phi0 = 0.5 * M_PI;
  const double span = 1.5 * M_PI;
  auto point = [&](double r, int tick) {
    const double phi = phi0 + span * tick / s;
    return Vec2{r * std::cos(phi), r * std::sin(phi)};
  };

  std::vector<Vec2> verts{{0.0, 0.0}};
  std::map<std::pair<int, int>, int> vid;  // (ring index, tick) -> vertex
  std::vector<double> ring_radius;
  std::vector<int> ring_step;  // tick stride of the ring

  auto add_ring = [&](double r, int step) {
    const int ring = static_cast<int>(ring_radius.size());
    ring_radius.push_back(r);
    ring_step.push_back(step);
    for (int t = 0; t <= s; t += step) {
      vid[{ring, t}] = static_cast<int>(verts.size());
      verts.push_back(point(r, t));
    }
    return ring;
  };

  std::vector<TriangleSpec> tris;
  auto tri = [&](int a, int b, int c) { tris.push_back({{a, b, c}, 0}); };

  // Innermost fan.
  const int fan_step = 1 << levels;
  const double r0 = std::pow(0.5, levels);
  const int ring0 = add_ring(r0, fan_step);
  for (int t = 0; t < s; t += fan_step)
    tri(0, vid[{ring0, t}], vid[{ring0, t + fan_step}]);

  int inner = ring0;
  for (int lev = 1; lev <= levels; ++lev) {
    const int step = 1 << (levels - lev);
    const double r_in = ring_radius[inner];
    const double r_out = 2.0 * r_in;
    const double dphi = span * step / s;
    const int nrows = std::max(1, static_cast<int>(std::lround((r_out - r_in) / (r_out * dphi))));
    for (int row = 1; row <= nrows; ++row) {
      const double r = r_in + (r_out - r_in) * row / nrows;
      const int outer = add_ring(r, step);
      if (row == 1) {
        // transition row: one coarse inner segment faces two fine outer ones
        for (int t = 0; t < s; t += 2 * step) {
          const int in_a = vid[{inner, t}], in_b = vid[{inner, t + 2 * step}];
          const int out_a = vid[{outer, t}], out_m = vid[{outer, t + step}],
                    out_b = vid[{outer, t + 2 * step}];
          tri(in_a, out_a, out_m);
          tri(in_a, out_m, in_b);
          tri(in_b, out_m, out_b);
        }
      } else {
        for (int t = 0; t < s; t += step) {
          const int in_a = vid[{inner, t}], in_b = vid[{inner, t + step}];
          const int out_a = vid[{outer, t}], out_b = vid[{outer, t + step}];
          tri(in_a, out_a, out_b);
          tri(in_a, out_b, in_b);
        }
      }
      inner = outer;
    }
  }

  std::vector<BoundarySpec> bnd;
  // straight edges along phi = pi/2 and phi = 2 pi
  int prev0 = 0, prevS = 0;
  for (std::size_t ring = 0; ring < ring_radius.size(); ++ring) {
    const int a = vid[{static_cast<int>(ring), 0}];
    const int b = vid[{static_cast<int>(ring), s}];
    bnd.push_back({prev0, a, BoundaryLabel::dirichlet});
    bnd.push_back({prevS, b, BoundaryLabel::dirichlet});
    prev0 = a;
    prevS = b;
  }
  // the arc
  const int last = static_cast<int>(ring_radius.size()) - 1;
  for (int t = 0; t < s; ++t)
    bnd.push_back({vid[{last, t}], vid[{last, t + 1}], BoundaryLabel::dirichlet});

  return build_mesh(verts, tris, bnd, kappa);
}

// ---------------------------------------------------------------------------

ProblemSpec layer_problem_spec(double kappa, int n) {
  if (!(kappa > 0.0)) throw Error("layer problem needs kappa > 0");
  ProblemSpec spec;
  spec.id = "layer";
  spec.kappa = [kappa](Vec2) { return kappa; };
  spec.source = [kappa](Vec2) { return kappa * kappa; };
  spec.neumann = [](Vec2) { return 0.0; };
  const BoundaryRule label = [](Vec2 m) {
    return std::abs(std::abs(m.x) - 1.0) < 1e-12 ? BoundaryLabel::dirichlet
                                                 : BoundaryLabel::neumann;
  };
  const KappaRule krule = spec.kappa;
  spec.initial_mesh = [n, label, krule]() {
    return uniform_square_mesh({-1.0, -1.0}, {1.0, 1.0}, n, n, label, krule);
  };

  // u = 1 - cosh(kappa x)/cosh(kappa); the difference is evaluated as a
  // product of sinh factors for small kappa and in exponential form for
  // large kappa to avoid cancellation and overflow.
  auto value = [kappa](Vec2 p) -> double {
    const double ax = std::abs(p.x);
    if (kappa < 50.0) {
      return 2.0 * std::sinh(0.5 * kappa * (1.0 + ax)) *
             std::sinh(0.5 * kappa * (1.0 - ax)) / std::cosh(kappa);
    }
    return 1.0 - std::exp(kappa * (ax - 1.0)) * (1.0 + std::exp(-2.0 * kappa * ax));
  };
  auto grad = [kappa](Vec2 p) -> Vec2 {
    const double ax = std::abs(p.x);
    const double sign = p.x >= 0.0 ? 1.0 : -1.0;
    double dx;
    if (kappa < 50.0) {
      dx = -kappa * std::sinh(kappa * p.x) / std::cosh(kappa);
      return {dx, 0.0};
    }
    dx = -kappa * sign * std::exp(kappa * (ax - 1.0)) *
         (1.0 - std::exp(-2.0 * kappa * ax));
    return {dx, 0.0};
  };
  spec.exact = ExactSolution{value, grad};
  return spec;
}

ProblemSpec sinsin_spec(int n) {
  ProblemSpec spec;
  spec.id = "sinsin";
  spec.kappa = [](Vec2) { return 1.0; };
  spec.source = [](Vec2 p) {
    return (2.0 * M_PI * M_PI + 1.0) * std::sin(M_PI * p.x) * std::sin(M_PI * p.y);
  };
  const BoundaryRule label = [](Vec2) { return BoundaryLabel::dirichlet; };
  const KappaRule krule = spec.kappa;
  spec.initial_mesh = [n, label, krule]() {
    return uniform_square_mesh({0.0, 0.0}, {1.0, 1.0}, n, n, label, krule);
  };
  spec.exact = ExactSolution{
      [](Vec2 p) { return std::sin(M_PI * p.x) * std::sin(M_PI * p.y); },
      [](Vec2 p) -> Vec2 {
        return {M_PI * std::cos(M_PI * p.x) * std::sin(M_PI * p.y),
                M_PI * std::sin(M_PI * p.x) * std::cos(M_PI * p.y)};
      }};
  return spec;
}

namespace {

// Exact solution machinery of the sector problem. Shared scaled Bessel
// denominator so the kappa-dependent pieces are computed once.
struct SectorSolution {
  double kappa;
  double inv_scaled_den;  // 1 / (I_{2/3}(kappa) e^{-kappa})

  static constexpr double alpha = 2.0 / 3.0;

  // polar angle mapped into [pi/2, 2 pi + eps)
  static void polar(Vec2 p, double& r, double& phi) {
    r = std::hypot(p.x, p.y);
    phi = std::atan2(p.y, p.x);
    if (phi < 0.5 * M_PI - 1e-12) phi += 2.0 * M_PI;
  }

  double angular(double phi) const { return std::sin((2.0 * phi - M_PI) / 3.0); }
  double angular_d(double phi) const {
    return (2.0 / 3.0) * std::cos((2.0 * phi - M_PI) / 3.0);
  }

  double radial(double r) const {  // r^{2/3} - I_a(kr)/I_a(k)
    const double z = kappa * r;
    const double ratio = bessel_i_scaled(alpha, z) * std::exp(z - kappa) * inv_scaled_den;
    return std::pow(r, alpha) - ratio;
  }
  double radial_d(double r) const {
    const double z = kappa * r;
    // I_a'(z) = I_{a+1}(z) + (a/z) I_a(z)
    const double d = bessel_i_scaled(alpha + 1.0, z) +
                     (alpha / z) * bessel_i_scaled(alpha, z);
    return alpha * std::pow(r, alpha - 1.0) - kappa * d * std::exp(z - kappa) * inv_scaled_den;
  }

  double value(Vec2 p) const {
    double r, phi;
    polar(p, r, phi);
    if (r < 1e-14) return 0.0;
    return radial(r) * angular(phi);
  }
  Vec2 gradient(Vec2 p) const {
    double r, phi;
    polar(p, r, phi);
    if (r < 1e-14) return {0.0, 0.0};
    const double g = radial(r), gd = radial_d(r);
    const double sv = angular(phi), sd = angular_d(phi);
    const double c = std::cos(phi), sn = std::sin(phi);
    return {gd * sv * c - g * sd * sn / r, gd * sv * sn + g * sd * c / r};
  }
};

}  // namespace

ProblemSpec example1_spec(double kappa, int boundary_segments) {
  if (!(kappa > 0.0)) throw Error("sector problem needs kappa > 0");
  if (boundary_segments < 8) throw Error("sector problem needs >= 8 arc segments");
  ProblemSpec spec;
  spec.id = "sector";
  spec.kappa = [kappa](Vec2) { return kappa; };

  auto sol = std::make_shared<SectorSolution>();
  sol->kappa = kappa;
  sol->inv_scaled_den = 1.0 / bessel_i_scaled(SectorSolution::alpha, kappa);

  spec.source = [kappa, sol](Vec2 p) {
    double r, phi;
    SectorSolution::polar(p, r, phi);
    return kappa * kappa * std::pow(r, SectorSolution::alpha) * sol->angular(phi);
  };
  const KappaRule krule = spec.kappa;
  spec.initial_mesh = [boundary_segments, krule]() {
    return sector_polygon_mesh(boundary_segments, krule);
  };
  spec.exact = ExactSolution{[sol](Vec2 p) { return sol->value(p); },
                             [sol](Vec2 p) { return sol->gradient(p); }};
  // the inscribed polygon follows the refinement: new midpoints of arc edges
  // are projected onto the unit circle
  spec.boundary_midpoint = [](const Vec2& a, const Vec2& b) {
    const Vec2 m = (a + b) * 0.5;
    if (std::abs(norm(a) - 1.0) < 1e-9 && std::abs(norm(b) - 1.0) < 1e-9)
      return m / norm(m);
    return m;
  };
  return spec;
}

ProblemSpec example2_spec(double kappa) {
  if (!(kappa > 0.0)) throw Error("square-disc problem needs kappa > 0");
  ProblemSpec spec;
  spec.id = "square-disc";
  spec.kappa = [kappa](Vec2 p) { return std::hypot(p.x, p.y) <= 0.5 ? kappa : 0.0; };
  spec.source = [kappa](Vec2 p) {
    return std::hypot(p.x, p.y) <= 0.5 ? kappa * kappa : 0.0;
  };
  spec.neumann = [](Vec2) { return 0.0; };
  const BoundaryRule label = [](Vec2) { return BoundaryLabel::neumann; };
  const KappaRule krule = spec.kappa;
  spec.initial_mesh = [label, krule]() {
    return two_triangle_square({-1.0, -1.0}, {1.0, 1.0}, label, krule);
  };
  spec.friedrichs_constant = std::sqrt(2.0) / M_PI;              // C_F^2 = 2/pi^2
  spec.trace_constant = std::sqrt(std::sqrt(2.0) / std::tanh(std::sqrt(2.0) / 2.0));
  return spec;
}

ProblemSpec half_kappa_spec(double kappa_pos, int n) {
  if (!(kappa_pos > 0.0)) throw Error("half-kappa problem needs kappa_pos > 0");
  if (n % 2 != 0) throw Error("half-kappa problem needs even n (interface at x = 0)");
  ProblemSpec spec;
  spec.id = "half-kappa";
  spec.kappa = [kappa_pos](Vec2 p) { return p.x > 0.0 ? kappa_pos : 0.0; };
  spec.source = [](Vec2) { return 1.0; };
  spec.neumann = [](Vec2) { return 0.3; };
  const BoundaryRule label = [](Vec2 m) {
    return std::abs(m.x - 1.0) < 1e-12 ? BoundaryLabel::dirichlet
                                       : BoundaryLabel::neumann;
  };
  const KappaRule krule = spec.kappa;
  spec.initial_mesh = [n, label, krule]() {
    return uniform_square_mesh({-1.0, -1.0}, {1.0, 1.0}, n, n, label, krule);
  };
  // C_F = 4/pi: Poincare on the width-2 strip with v = 0 at x = 1.
  // C_T from the field F = (x, y), F.n = 1 on the whole square boundary:
  // ||v||_G^2 <= 2 ||v||^2 + 2 sqrt(2) ||v|| ||grad v||  =>  2 C_F^2 + 2 sqrt(2) C_F.
  const double cf = 4.0 / M_PI;
  spec.friedrichs_constant = cf;
  spec.trace_constant = std::sqrt(2.0 * cf * cf + 2.0 * std::sqrt(2.0) * cf);
  return spec;
}

ProblemSpec problem_by_id(const std::string& id, double kappa, int n, int segments) {
  if (id == "layer") return layer_problem_spec(kappa, n);
  if (id == "sinsin") return sinsin_spec(n);
  if (id == "sector") return example1_spec(kappa, segments);
  if (id == "square-disc") return example2_spec(kappa);
  if (id == "half-kappa") return half_kappa_spec(kappa, n);
  throw ProblemNotFound("unknown problem id '" + id + "'");
}

double exact_error(const Mesh& mesh, const P1Solution& u_h, const ProblemSpec& spec,
                   double rel_tol) {
  if (!spec.exact) throw MissingExactSolution("problem '" + spec.id +
                                              "' has no exact solution");
  auto integrand = [&](int k) {
    const auto& el = mesh.elements[k];
    const double k2 = el.kappa * el.kappa;
    const Vec2 gh = u_h.gradient(mesh, k);
    return [&, k, k2, gh](Vec2 x) {
      const Vec2 dg = spec.exact->gradient(x) - gh;
      const double dv = spec.exact->value(x) - u_h.value(mesh, k, x);
      return dot(dg, dg) + k2 * dv * dv;
    };
  };
  // rough global scale so elements whose contribution is rounding noise stop
  // refining early (their own relative tolerance is unreachable)
  const QuadratureRule& probe = cached_rule(5);
  double scale = 0.0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    scale += integrate_triangle(probe, mesh.vertices[el.v[0]],
                                mesh.vertices[el.v[1]], mesh.vertices[el.v[2]],
                                integrand(k));
  }
  const double floor = rel_tol * std::max(scale, 1e-300) / mesh.n_elements();
  double sum = 0.0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    sum += integrate_adaptive(integrand(k), mesh.vertices[el.v[0]],
                              mesh.vertices[el.v[1]], mesh.vertices[el.v[2]], rel_tol,
                              20, floor);
  }
  return std::sqrt(std::max(0.0, sum));
}

double reference_error(const Mesh& coarse_mesh, const P1Solution& u_h,
                       const ProblemSpec& spec, double solver_tol) {
  const Mesh* coarse = &coarse_mesh;
  std::vector<double> fine_vals = u_h.nodal;
  Mesh fine;
  {
    const Mesh* current = coarse;
    for (int sweep = 0; sweep < 2; ++sweep) {
      std::vector<int> all(current->n_elements());
      for (int k = 0; k < current->n_elements(); ++k) all[k] = k;
      BisectResult res = bisect_tracked(*current, all, spec.kappa);
      const int old_nv = static_cast<int>(fine_vals.size());
      fine_vals.resize(res.mesh.n_vertices());
      for (std::size_t i = 0; i < res.parent_edge.size(); ++i) {
        const auto [a, b] = res.parent_edge[i];
        fine_vals[old_nv + i] = 0.5 * (fine_vals[a] + fine_vals[b]);
      }
      fine = std::move(res.mesh);
      current = &fine;
    }
  }
  const SparseSystem sys = assemble(fine, spec);
  const P1Solution u_ref = solve_cg(fine, sys, solver_tol);
  std::vector<double> diff(fine.n_vertices());
  for (int i = 0; i < fine.n_vertices(); ++i) diff[i] = u_ref.nodal[i] - fine_vals[i];
  return energy_norm_p1(fine, diff);
}

double effectivity(double estimator_total, double error) {
  if (!(error > 0.0)) throw ZeroError("effectivity undefined for zero error");
  return estimator_total / error;
}

}  // namespace equiflux
