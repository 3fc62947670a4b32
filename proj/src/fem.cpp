#include "equiflux/fem.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "equiflux/errors.hpp"
#include "equiflux/problems.hpp"

namespace equiflux {

DofMap build_dofmap(const Mesh& mesh) {
  std::vector<char> constrained(mesh.n_vertices(), 0);
  for (const Facet& f : mesh.facets) {
    if (f.label != BoundaryLabel::dirichlet) continue;
    constrained[f.v[0]] = 1;
    constrained[f.v[1]] = 1;
  }
  DofMap dm;
  dm.node_to_dof.assign(mesh.n_vertices(), -1);
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    if (constrained[i]) {
      dm.dirichlet_nodes.push_back(i);
    } else {
      dm.node_to_dof[i] = static_cast<int>(dm.free_nodes.size());
      dm.free_nodes.push_back(i);
    }
  }
  return dm;
}

CsrMatrix::CsrMatrix(const std::vector<std::vector<std::pair<int, double>>>& rows) {
  row_ptr_.assign(1, 0);
  for (const auto& row : rows) {
    for (const auto& [j, v] : row) {
      col_.push_back(j);
      val_.push_back(v);
    }
    row_ptr_.push_back(static_cast<int>(col_.size()));
  }
}

void CsrMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
  const int n = rows();
  y.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) s += val_[p] * x[col_[p]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(rows(), 0.0);
  for (int i = 0; i < rows(); ++i)
    for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
      if (col_[p] == i) d[i] = val_[p];
  return d;
}

double CsrMatrix::coeff(int i, int j) const {
  for (int p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
    if (col_[p] == j) return val_[p];
  return 0.0;
}

double P1Solution::value(const Mesh& mesh, int k, const Vec2& x) const {
  const auto& el = mesh.elements[k];
  const Vec2 p0 = mesh.vertices[el.v[0]];
  const Vec2 p1 = mesh.vertices[el.v[1]];
  const Vec2 p2 = mesh.vertices[el.v[2]];
  const double a2 = signed_area2(p0, p1, p2);
  const double l0 = signed_area2(x, p1, p2) / a2;
  const double l1 = signed_area2(p0, x, p2) / a2;
  const double l2 = 1.0 - l0 - l1;
  return nodal[el.v[0]] * l0 + nodal[el.v[1]] * l1 + nodal[el.v[2]] * l2;
}

Vec2 P1Solution::gradient(const Mesh& mesh, int k) const {
  const auto g = hat_gradients(mesh, k);
  const auto& el = mesh.elements[k];
  Vec2 grad{0.0, 0.0};
  for (int i = 0; i < 3; ++i) grad += g[i] * nodal[el.v[i]];
  return grad;
}

std::array<Vec2, 3> hat_gradients(const Mesh& mesh, int k) {
  const auto& el = mesh.elements[k];
  const Vec2 p[3] = {mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                     mesh.vertices[el.v[2]]};
  const double a2 = signed_area2(p[0], p[1], p[2]);
  std::array<Vec2, 3> g;
  for (int i = 0; i < 3; ++i) {
    const Vec2 e = p[(i + 2) % 3] - p[(i + 1) % 3];
    g[i] = Vec2{-e.y, e.x} * (1.0 / a2);
  }
  return g;
}

SparseSystem assemble(const Mesh& mesh, const ProblemSpec& problem) {
  SparseSystem sys;
  sys.dofs = build_dofmap(mesh);
  const int n = sys.dofs.n_free();
  if (n == 0) throw EmptySystem("all mesh nodes carry Dirichlet constraints");
  if (sys.dofs.dirichlet_nodes.empty()) {
    double kmax = 0.0;
    for (const auto& el : mesh.elements) kmax = std::max(kmax, el.kappa);
    if (kmax == 0.0)
      throw Error("ill-posed problem: no Dirichlet boundary and kappa identically zero");
  }

  std::vector<std::map<int, double>> rows(n);
  sys.rhs.assign(n, 0.0);
  const QuadratureRule& load_rule = cached_rule(10);

  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    const auto g = hat_gradients(mesh, k);
    const Vec2 p0 = mesh.vertices[el.v[0]];
    const Vec2 p1 = mesh.vertices[el.v[1]];
    const Vec2 p2 = mesh.vertices[el.v[2]];
    const double area = 0.5 * std::abs(signed_area2(p0, p1, p2));
    const double k2 = el.kappa * el.kappa;

    double local[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        local[i][j] = area * dot(g[i], g[j]) +
                      k2 * area * (i == j ? 1.0 / 6.0 : 1.0 / 12.0);

    double load[3] = {0.0, 0.0, 0.0};
    for (std::size_t q = 0; q < load_rule.size(); ++q) {
      const auto& l = load_rule.points[q];
      const Vec2 x = p0 * l[0] + p1 * l[1] + p2 * l[2];
      const double wf = load_rule.weights[q] * problem.source(x) * area;
      for (int i = 0; i < 3; ++i) load[i] += wf * l[i];
    }

    for (int i = 0; i < 3; ++i) {
      const int di = sys.dofs.node_to_dof[el.v[i]];
      if (di < 0) continue;
      sys.rhs[di] += load[i];
      for (int j = 0; j < 3; ++j) {
        const int dj = sys.dofs.node_to_dof[el.v[j]];
        if (dj >= 0) rows[di][dj] += local[i][j];
      }
    }
  }

  if (problem.neumann) {
    const SegmentRule& srule = segment_rule(6);
    for (const Facet& f : mesh.facets) {
      if (f.label != BoundaryLabel::neumann) continue;
      const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
      double m0 = 0.0, m1 = 0.0;
      for (std::size_t q = 0; q < srule.points.size(); ++q) {
        const double t = srule.points[q];
        const double wg =
            srule.weights[q] * problem.neumann(a + (b - a) * t) * f.length;
        m0 += wg * (1.0 - t);
        m1 += wg * t;
      }
      const int d0 = sys.dofs.node_to_dof[f.v[0]];
      const int d1 = sys.dofs.node_to_dof[f.v[1]];
      if (d0 >= 0) sys.rhs[d0] += m0;
      if (d1 >= 0) sys.rhs[d1] += m1;
    }
  }

  std::vector<std::vector<std::pair<int, double>>> packed(n);
  for (int i = 0; i < n; ++i) packed[i].assign(rows[i].begin(), rows[i].end());
  sys.matrix = CsrMatrix(packed);
  return sys;
}

std::vector<double> cg_solve(const CsrMatrix& a, const std::vector<double>& rhs,
                             double rel_tol, int max_iter) {
  const int n = a.rows();
  if (max_iter <= 0) max_iter = std::max(2000, 20 * n);
  std::vector<double> x(n, 0.0);
  std::vector<double> diag = a.diagonal();
  for (double& d : diag) d = (d > 0.0) ? 1.0 / d : 1.0;

  auto dot_v = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
  };

  std::vector<double> r = rhs;
  const double rhs_norm = std::sqrt(dot_v(rhs, rhs));
  if (rhs_norm == 0.0) return x;
  std::vector<double> z(n), p(n), q(n);
  for (int i = 0; i < n; ++i) z[i] = diag[i] * r[i];
  p = z;
  double rz = dot_v(r, z);
  for (int it = 0; it < max_iter; ++it) {
    a.multiply(p, q);
    const double alpha = rz / dot_v(p, q);
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    if (std::sqrt(dot_v(r, r)) <= rel_tol * rhs_norm) return x;
    for (int i = 0; i < n; ++i) z[i] = diag[i] * r[i];
    const double rz_new = dot_v(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw NoConvergence("cg did not reach tolerance " + std::to_string(rel_tol),
                      std::sqrt(dot_v(r, r)) / rhs_norm);
}

P1Solution solve_cg(const Mesh& mesh, const SparseSystem& system, double rel_tol,
                    int max_iter) {
  const std::vector<double> x = cg_solve(system.matrix, system.rhs, rel_tol, max_iter);
  P1Solution u;
  u.nodal.assign(mesh.n_vertices(), 0.0);
  for (int d = 0; d < system.dofs.n_free(); ++d) u.nodal[system.dofs.free_nodes[d]] = x[d];
  return u;
}

double galerkin_residual(const P1Solution& u_h, const SparseSystem& system) {
  const int n = system.dofs.n_free();
  std::vector<double> x(n);
  for (int d = 0; d < n; ++d) x[d] = u_h.nodal[system.dofs.free_nodes[d]];
  std::vector<double> ax;
  system.matrix.multiply(x, ax);
  double res = 0.0;
  for (int d = 0; d < n; ++d) res = std::max(res, std::abs(system.rhs[d] - ax[d]));
  return res;
}

double galerkin_residual(const Mesh& mesh, const P1Solution& u_h,
                         const ProblemSpec& problem) {
  return galerkin_residual(u_h, assemble(mesh, problem));
}

AffineOnTri project_affine_element(const ScalarField& f, const Mesh& mesh, int k,
                                   int quad_degree) {
  const auto& el = mesh.elements[k];
  const Vec2 p0 = mesh.vertices[el.v[0]];
  const Vec2 p1 = mesh.vertices[el.v[1]];
  const Vec2 p2 = mesh.vertices[el.v[2]];
  const Vec2 c = (p0 + p1 + p2) / 3.0;
  const double area = 0.5 * std::abs(signed_area2(p0, p1, p2));
  const QuadratureRule& rule = cached_rule(quad_degree);

  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const auto& l = rule.points[q];
    const Vec2 x = p0 * l[0] + p1 * l[1] + p2 * l[2];
    const double basis[3] = {1.0, x.x - c.x, x.y - c.y};
    const double w = rule.weights[q] * area;
    for (int i = 0; i < 3; ++i) {
      rhs(i) += w * f(x) * basis[i];
      for (int j = 0; j < 3; ++j) m(i, j) += w * basis[i] * basis[j];
    }
  }
  const Eigen::Vector3d sol = m.ldlt().solve(rhs);
  return AffineOnTri{c, sol(0), sol(1), sol(2)};
}

AffineOnSeg project_affine_facet(const ScalarField& g, const Mesh& mesh, int facet,
                                 int gauss_points) {
  const Facet& f = mesh.facets[facet];
  const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
  const double len = f.length;
  const SegmentRule& rule = segment_rule(gauss_points);
  // centered basis {1, s - L/2} is orthogonal on the segment
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const double t = rule.points[q];
    const double w = rule.weights[q] * len;
    const double val = g(a + (b - a) * t);
    m0 += w * val;
    m1 += w * val * (t - 0.5) * len;
  }
  const double c0 = m0 / len;
  const double c1 = m1 / (len * len * len / 12.0);
  return AffineOnSeg{c0 - 0.5 * len * c1, c1};
}

namespace {

template <class Inner>
double energy_accumulate(const Mesh& mesh, Inner&& element_integral) {
  double sum = 0.0;
  for (int k = 0; k < mesh.n_elements(); ++k) sum += element_integral(k);
  return std::sqrt(sum);
}

}  // namespace

double energy_norm(const Mesh& mesh, const ScalarField& v, const VectorField& grad_v,
                   int quad_degree) {
  const QuadratureRule& rule = cached_rule(quad_degree);
  return energy_accumulate(mesh, [&](int k) {
    const auto& el = mesh.elements[k];
    const double k2 = el.kappa * el.kappa;
    return integrate_triangle(rule, mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                              mesh.vertices[el.v[2]], [&](Vec2 x) {
                                const Vec2 gr = grad_v(x);
                                const double val = v(x);
                                return dot(gr, gr) + k2 * val * val;
                              });
  });
}

double energy_norm_adaptive(const Mesh& mesh, const ScalarField& v,
                            const VectorField& grad_v, double rel_tol) {
  auto integrand = [&](int k) {
    const double k2 = mesh.elements[k].kappa * mesh.elements[k].kappa;
    return [&, k2](Vec2 x) {
      const Vec2 gr = grad_v(x);
      const double val = v(x);
      return dot(gr, gr) + k2 * val * val;
    };
  };
  const QuadratureRule& probe = cached_rule(5);
  double scale = 0.0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    scale += integrate_triangle(probe, mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                                mesh.vertices[el.v[2]], integrand(k));
  }
  const double floor = rel_tol * std::max(scale, 1e-300) / mesh.n_elements();
  return energy_accumulate(mesh, [&](int k) {
    const auto& el = mesh.elements[k];
    return integrate_adaptive(integrand(k), mesh.vertices[el.v[0]],
                              mesh.vertices[el.v[1]], mesh.vertices[el.v[2]], rel_tol,
                              20, floor);
  });
}

double energy_norm_p1(const Mesh& mesh, const std::vector<double>& nodal) {
  return energy_accumulate(mesh, [&](int k) {
    const auto& el = mesh.elements[k];
    const auto g = hat_gradients(mesh, k);
    const double area =
        0.5 * std::abs(signed_area2(mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                                    mesh.vertices[el.v[2]]));
    Vec2 grad{0.0, 0.0};
    for (int i = 0; i < 3; ++i) grad += g[i] * nodal[el.v[i]];
    const double c0 = nodal[el.v[0]], c1 = nodal[el.v[1]], c2 = nodal[el.v[2]];
    const double csum = c0 + c1 + c2;
    const double mass = area / 12.0 * (csum * csum + c0 * c0 + c1 * c1 + c2 * c2);
    return dot(grad, grad) * area + el.kappa * el.kappa * mass;
  });
}

}  // namespace equiflux
