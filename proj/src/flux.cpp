#include "equiflux/flux.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "equiflux/errors.hpp"
#include "equiflux/quadrature.hpp"

namespace equiflux {

PatchFluxSpace build_patch_space(const Mesh& mesh, const Patch& patch) {
  PatchFluxSpace space;
  space.patch = patch;
  space.dof_of_elem.assign(patch.elements.size(), {-1, -1, -1, -1, -1, -1, -1, -1});

  std::map<int, std::array<int, 2>> facet_dofs;
  auto zero_constrained = [&](int fi) {
    return std::binary_search(patch.ext_facets_no_node.begin(),
                              patch.ext_facets_no_node.end(), fi);
  };

  int next = 0;
  for (std::size_t pe = 0; pe < patch.elements.size(); ++pe) {
    const auto& el = mesh.elements[patch.elements[pe]];
    for (int i = 0; i < 3; ++i) {
      const int fi = el.facet[i];
      if (zero_constrained(fi)) continue;  // normal trace pinned to zero
      auto it = facet_dofs.find(fi);
      if (it == facet_dofs.end())
        it = facet_dofs.emplace(fi, std::array<int, 2>{next++, next++}).first;
      space.dof_of_elem[pe][2 * i] = it->second[0];
      space.dof_of_elem[pe][2 * i + 1] = it->second[1];
    }
    space.dof_of_elem[pe][6] = next++;
    space.dof_of_elem[pe][7] = next++;
  }
  space.n_free = next;
  return space;
}

namespace {

// Everything elementwise the patch assembly needs: the RT1 basis, the hat
// function of the patch node, and the projected divergence data
//   D = Pi_K(theta (Pi f - kappa^2 u_h)) - grad theta . grad u_h.
struct PatchElementContext {
  int element;
  RT1Basis basis;
  int local_node;           // local index of the patch node
  Vec2 grad_theta;
  Vec2 grad_uh;
  AffineOnTri d;            // the P1 function D above
  double kappa;
  Vec2 p[3];
  double area;

  PatchElementContext(const Mesh& mesh, int k, int node, const P1Solution& u_h,
                      const ProblemData& data)
      : element(k), basis(mesh, k) {
    const auto& el = mesh.elements[k];
    local_node = mesh.local_vertex(k, node);
    const auto hg = hat_gradients(mesh, k);
    grad_theta = hg[local_node];
    grad_uh = u_h.gradient(mesh, k);
    kappa = el.kappa;
    for (int i = 0; i < 3; ++i) p[i] = mesh.vertices[el.v[i]];
    area = 0.5 * std::abs(signed_area2(p[0], p[1], p[2]));

    const double k2 = kappa * kappa;
    const AffineOnTri& pf = data.proj_f[k];
    // project theta (Pi f - kappa^2 u_h), a quadratic, onto P1(K)
    const AffineOnTri psi = project_affine_element(
        [&](Vec2 x) {
          return theta(mesh, x) * (pf(x) - k2 * u_h.value(mesh, k, x));
        },
        mesh, k, 4);
    const double gg = dot(grad_theta, grad_uh);
    d = AffineOnTri{psi.x0, psi.a - gg, psi.bx, psi.by};
  }

  double theta(const Mesh& mesh, const Vec2& x) const {
    const auto& el = mesh.elements[element];
    const Vec2 p0 = mesh.vertices[el.v[0]], p1 = mesh.vertices[el.v[1]],
               p2 = mesh.vertices[el.v[2]];
    const double a2 = signed_area2(p0, p1, p2);
    switch (local_node) {
      case 0: return signed_area2(x, p1, p2) / a2;
      case 1: return signed_area2(p0, x, p2) / a2;
      default: return signed_area2(p0, p1, x) / a2;
    }
  }
};

// theta restricted to a facet containing the node: the segment Lagrange
// function that is 1 at the node end.
double theta_on_facet(const Facet& f, int node, double t) {
  return f.v[0] == node ? 1.0 - t : t;
}

struct PatchAssembler {
  const Mesh& mesh;
  const PatchFluxSpace& space;
  const P1Solution& u_h;
  const ProblemData& data;
  PatchSystem sys;
  std::vector<std::pair<std::map<int, double>, double>> constraint_rows;

  PatchAssembler(const Mesh& m, const PatchFluxSpace& s, const P1Solution& u,
                 const ProblemData& d)
      : mesh(m), space(s), u_h(u), data(d) {
    sys.m = Eigen::MatrixXd::Zero(space.n_free, space.n_free);
    sys.g = Eigen::VectorXd::Zero(space.n_free);
  }

  // || tau - theta grad u_h ||_K^2
  void add_misfit_term(const PatchElementContext& ctx, std::size_t pe) {
    const QuadratureRule& rule = cached_rule(4);
    const auto& dofs = space.dof_of_elem[pe];
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = ctx.p[0] * l[0] + ctx.p[1] * l[1] + ctx.p[2] * l[2];
      const double w = rule.weights[q] * ctx.area;
      const Vec2 target = ctx.grad_uh * l[ctx.local_node];  // theta grad u_h
      Vec2 phi[8];
      for (int j = 0; j < 8; ++j)
        phi[j] = dofs[j] >= 0 ? ctx.basis.eval(j, x) : Vec2{0.0, 0.0};
      for (int j = 0; j < 8; ++j) {
        if (dofs[j] < 0) continue;
        sys.g(dofs[j]) += w * dot(target, phi[j]);
        for (int i = 0; i <= j; ++i) {
          if (dofs[i] < 0) continue;
          const double v = w * dot(phi[i], phi[j]);
          sys.m(dofs[i], dofs[j]) += v;
          if (i != j) sys.m(dofs[j], dofs[i]) += v;
        }
      }
      sys.e_const += w * dot(target, target);
    }
  }

  // weight^2 * || D + div tau ||_K^2
  void add_divergence_term(const PatchElementContext& ctx, std::size_t pe,
                           double inv_weight2) {
    const QuadratureRule& rule = cached_rule(4);
    const auto& dofs = space.dof_of_elem[pe];
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = ctx.p[0] * l[0] + ctx.p[1] * l[1] + ctx.p[2] * l[2];
      const double w = rule.weights[q] * ctx.area * inv_weight2;
      const double dval = ctx.d(x);
      double dphi[8];
      for (int j = 0; j < 8; ++j)
        dphi[j] = dofs[j] >= 0 ? ctx.basis.div(j, x) : 0.0;
      for (int j = 0; j < 8; ++j) {
        if (dofs[j] < 0) continue;
        sys.g(dofs[j]) -= w * dval * dphi[j];
        for (int i = 0; i <= j; ++i) {
          if (dofs[i] < 0) continue;
          const double v = w * dphi[i] * dphi[j];
          sys.m(dofs[i], dofs[j]) += v;
          if (i != j) sys.m(dofs[j], dofs[i]) += v;
        }
      }
      sys.e_const += w * dval * dval;
    }
  }

  // three divergence-moment constraints against P1(K)
  void add_divergence_constraints(const PatchElementContext& ctx, std::size_t pe) {
    const QuadratureRule& rule = cached_rule(4);
    const auto& dofs = space.dof_of_elem[pe];
    const Vec2 c = (ctx.p[0] + ctx.p[1] + ctx.p[2]) / 3.0;
    for (int r = 0; r < 3; ++r) {
      std::map<int, double> row;
      double rhs = 0.0;
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto& l = rule.points[q];
        const Vec2 x = ctx.p[0] * l[0] + ctx.p[1] * l[1] + ctx.p[2] * l[2];
        const double w = rule.weights[q] * ctx.area;
        const double test = r == 0 ? 1.0 : (r == 1 ? x.x - c.x : x.y - c.y);
        rhs -= w * ctx.d(x) * test;
        for (int j = 0; j < 8; ++j) {
          if (dofs[j] < 0) continue;
          row[dofs[j]] += w * ctx.basis.div(j, x) * test;
        }
      }
      constraint_rows.emplace_back(std::move(row), rhs);
    }
  }

  // chi = Pi_g(theta Pi_g g_N) on a Neumann facet containing the node
  AffineOnSeg facet_chi(int fi, int node) const {
    const Facet& f = mesh.facets[fi];
    const AffineOnSeg& pg = data.proj_g[fi];
    const SegmentRule& gauss2 = segment_rule(2);
    double m0 = 0.0, m1 = 0.0;
    const double len = f.length;
    for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
      const double t = gauss2.points[q];
      const double val = theta_on_facet(f, node, t) * pg.at(t * len);
      const double w = gauss2.weights[q] * len;
      m0 += w * val;
      m1 += w * val * (t - 0.5) * len;
    }
    const double c0 = m0 / len;
    const double c1 = m1 / (len * len * len / 12.0);
    return AffineOnSeg{c0 - 0.5 * len * c1, c1};
  }

  // weight^2 * || chi - tau.n ||_g^2 over one Neumann facet of element pe
  void add_facet_term(const PatchElementContext& ctx, std::size_t pe, int local_facet,
                      double inv_weight2) {
    const auto& dofs = space.dof_of_elem[pe];
    const int fi = mesh.elements[ctx.element].facet[local_facet];
    const Facet& f = mesh.facets[fi];
    const AffineOnSeg chi = facet_chi(fi, space.patch.node);
    const SegmentRule& gauss2 = segment_rule(2);
    const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
    const int jd[2] = {2 * local_facet, 2 * local_facet + 1};
    for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
      const double t = gauss2.points[q];
      const Vec2 x = a + (b - a) * t;
      const double w = gauss2.weights[q] * f.length * inv_weight2;
      const double cval = chi.at(t * f.length);
      double tn[2];
      for (int jj = 0; jj < 2; ++jj)
        tn[jj] = dofs[jd[jj]] >= 0 ? dot(ctx.basis.eval(jd[jj], x), f.normal) : 0.0;
      for (int jj = 0; jj < 2; ++jj) {
        if (dofs[jd[jj]] < 0) continue;
        sys.g(dofs[jd[jj]]) += w * cval * tn[jj];
        for (int ii = 0; ii < 2; ++ii) {
          if (dofs[jd[ii]] < 0) continue;
          sys.m(dofs[jd[ii]], dofs[jd[jj]]) += w * tn[ii] * tn[jj];
        }
      }
      sys.e_const += w * cval * cval;
    }
  }

  // Neumann trace constraints: the facet dofs are the moments themselves.
  void add_facet_constraints(const PatchElementContext& ctx, std::size_t pe,
                             int local_facet) {
    const auto& dofs = space.dof_of_elem[pe];
    const int fi = mesh.elements[ctx.element].facet[local_facet];
    const Facet& f = mesh.facets[fi];
    const AffineOnSeg& pg = data.proj_g[fi];
    const SegmentRule& gauss2 = segment_rule(2);
    for (int r = 0; r < 2; ++r) {
      double rhs = 0.0;
      for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
        const double t = gauss2.points[q];
        const double lagr = r == 0 ? 1.0 - t : t;
        rhs += gauss2.weights[q] * f.length *
               theta_on_facet(f, space.patch.node, t) * pg.at(t * f.length) * lagr;
      }
      std::map<int, double> row;
      row[dofs[2 * local_facet + r]] = 1.0;
      constraint_rows.emplace_back(std::move(row), rhs);
    }
  }

  void pack_constraints() {
    const int m = static_cast<int>(constraint_rows.size());
    sys.a = Eigen::MatrixXd::Zero(m, space.n_free);
    sys.b = Eigen::VectorXd::Zero(m);
    for (int r = 0; r < m; ++r) {
      for (const auto& [j, v] : constraint_rows[r].first) sys.a(r, j) = v;
      sys.b(r) = constraint_rows[r].second;
    }
  }
};

bool facet_contains_node(const Mesh& mesh, int fi, int node) {
  const Facet& f = mesh.facets[fi];
  return f.v[0] == node || f.v[1] == node;
}

}  // namespace

PatchSystem assemble_patch_constrained(const Mesh& mesh, const PatchFluxSpace& space,
                                       const P1Solution& u_h,
                                       const ProblemData& data) {
  PatchAssembler as(mesh, space, u_h, data);
  const Patch& patch = space.patch;
  for (std::size_t pe = 0; pe < patch.elements.size(); ++pe) {
    const int k = patch.elements[pe];
    const PatchElementContext ctx(mesh, k, patch.node, u_h, data);
    as.add_misfit_term(ctx, pe);
    if (ctx.kappa > 0.0)
      as.add_divergence_term(ctx, pe, 1.0 / (ctx.kappa * ctx.kappa));
    else
      as.add_divergence_constraints(ctx, pe);
    for (int i = 0; i < 3; ++i) {
      const int fi = mesh.elements[k].facet[i];
      if (!data.neumann[fi] || !facet_contains_node(mesh, fi, patch.node)) continue;
      if (ctx.kappa > 0.0)
        as.add_facet_term(ctx, pe, i, data.ct[fi] * data.ct[fi]);
      else
        as.add_facet_constraints(ctx, pe, i);
    }
  }
  as.pack_constraints();
  return std::move(as.sys);
}

PatchSystem assemble_patch_penalized(const Mesh& mesh, const PatchFluxSpace& space,
                                     const P1Solution& u_h, const ProblemData& data,
                                     double kappa0, double zeta0) {
  if (!(kappa0 > 0.0) || !(zeta0 > 0.0))
    throw Error("penalized patch problem needs kappa0 > 0 and zeta0 > 0");
  PatchAssembler as(mesh, space, u_h, data);
  const Patch& patch = space.patch;
  for (std::size_t pe = 0; pe < patch.elements.size(); ++pe) {
    const int k = patch.elements[pe];
    const PatchElementContext ctx(mesh, k, patch.node, u_h, data);
    as.add_misfit_term(ctx, pe);
    const double kt = ctx.kappa > 0.0 ? ctx.kappa : kappa0;
    as.add_divergence_term(ctx, pe, 1.0 / (kt * kt));
    for (int i = 0; i < 3; ++i) {
      const int fi = mesh.elements[k].facet[i];
      if (!data.neumann[fi] || !facet_contains_node(mesh, fi, patch.node)) continue;
      const double w = ctx.kappa > 0.0 ? data.ct[fi] * data.ct[fi]
                                       : 1.0 / (zeta0 * zeta0);
      as.add_facet_term(ctx, pe, i, w);
    }
  }
  as.pack_constraints();
  return std::move(as.sys);
}

PatchSolve solve_patch(const PatchSystem& system) {
  const int n = static_cast<int>(system.m.rows());
  const int m = static_cast<int>(system.a.rows());
  PatchSolve out;

  // Jacobi equilibration of the primal block; penalty weights of order
  // 1/kappa0^2 otherwise push the condition number past what a plain
  // factorization survives.
  Eigen::VectorXd d = system.m.diagonal();
  for (int i = 0; i < n; ++i) d(i) = d(i) > 0.0 ? 1.0 / std::sqrt(d(i)) : 1.0;
  const Eigen::MatrixXd ms = d.asDiagonal() * system.m * d.asDiagonal();
  const Eigen::VectorXd gs = d.asDiagonal() * system.g;

  if (m == 0) {
    // LDLT with diagonal pivoting handles the penalty conditioning; its
    // info() flag trips on the rounding-level trailing pivots penalty blocks
    // leave behind, so the backward residual is the acceptance criterion.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ms);
    Eigen::VectorXd y = ldlt.solve(gs);
    const double backward = ms.lpNorm<Eigen::Infinity>() * y.lpNorm<Eigen::Infinity>() +
                            gs.lpNorm<Eigen::Infinity>();
    if (!y.allFinite() ||
        (ms * y - gs).lpNorm<Eigen::Infinity>() > 1e-8 * std::max(backward, 1e-300))
      throw SingularPrimalBlock("patch functional block is not positive definite");
    out.coeffs = d.asDiagonal() * y;
    out.functional_value = std::max(0.0, system.functional(out.coeffs));
    return out;
  }

  const Eigen::MatrixXd as = system.a * d.asDiagonal();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = ms;
  kkt.topRightCorner(n, m) = as.transpose();
  kkt.bottomLeftCorner(m, n) = as;
  Eigen::VectorXd rhs(n + m);
  rhs.head(n) = gs;
  rhs.tail(m) = system.b;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  lu.setThreshold(1e-10);
  Eigen::VectorXd sol;
  if (lu.isInvertible()) {
    sol = lu.solve(rhs);
  } else {
    // dependent constraint rows: multipliers are non-unique, take the
    // minimum-norm solution of the (consistent) saddle system
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    cod.setThreshold(1e-10);
    sol = cod.solve(rhs);
    out.used_min_norm = true;
  }

  const double scale =
      std::max({rhs.lpNorm<Eigen::Infinity>(),
                (kkt * sol).lpNorm<Eigen::Infinity>(), 1e-300});
  if (!sol.allFinite())
    throw SingularPrimalBlock("patch saddle solve produced non-finite values");
  // a large KKT residual with a healthy functional block means inconsistent
  // constraints; that surfaces through constraint_residual below
  (void)scale;

  out.coeffs = d.asDiagonal() * sol.head(n);
  out.constraint_residual =
      (system.a * out.coeffs - system.b).lpNorm<Eigen::Infinity>();
  out.functional_value = std::max(0.0, system.functional(out.coeffs));
  return out;
}

FluxField accumulate_global(const Mesh& mesh, const std::vector<PatchFluxSpace>& spaces,
                            const std::vector<PatchSolve>& solutions) {
  if (static_cast<int>(spaces.size()) != mesh.n_vertices() ||
      solutions.size() != spaces.size())
    throw MissingPatch("one solved patch per mesh node is required");
  FluxField tau;
  tau.elem.assign(mesh.n_elements(), {});
  for (std::size_t n = 0; n < spaces.size(); ++n) {
    const PatchFluxSpace& space = spaces[n];
    const Eigen::VectorXd& c = solutions[n].coeffs;
    for (std::size_t pe = 0; pe < space.patch.elements.size(); ++pe) {
      const int k = space.patch.elements[pe];
      for (int j = 0; j < 8; ++j) {
        const int dof = space.dof_of_elem[pe][j];
        if (dof >= 0) tau.elem[k][j] += c(dof);
      }
    }
  }
  return tau;
}

FluxResult reconstruct_flux(const Mesh& mesh, const P1Solution& u_h,
                            const ProblemSpec& problem, const ProblemData& data,
                            FluxMode mode) {
  FluxResult res;
  res.tau.elem.assign(mesh.n_elements(), {});
  res.patch_energy.assign(mesh.n_vertices(), 0.0);
  for (int n = 0; n < mesh.n_vertices(); ++n) {
    const Patch patch = node_patch(mesh, n);
    const PatchFluxSpace space = build_patch_space(mesh, patch);
    const PatchSystem system =
        mode == FluxMode::constrained
            ? assemble_patch_constrained(mesh, space, u_h, data)
            : assemble_patch_penalized(mesh, space, u_h, data, problem.kappa0,
                                       problem.zeta0);
    const PatchSolve sol = solve_patch(system);
    res.patch_energy[n] = sol.functional_value;
    res.max_constraint_residual =
        std::max(res.max_constraint_residual, sol.constraint_residual);
    if (sol.used_min_norm) ++res.min_norm_solves;
    for (std::size_t pe = 0; pe < space.patch.elements.size(); ++pe) {
      const int k = space.patch.elements[pe];
      for (int j = 0; j < 8; ++j) {
        const int dof = space.dof_of_elem[pe][j];
        if (dof >= 0) res.tau.elem[k][j] += sol.coeffs(dof);
      }
    }
  }
  return res;
}

}  // namespace equiflux
