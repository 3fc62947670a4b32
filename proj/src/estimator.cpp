#include "equiflux/estimator.hpp"

#include <cmath>

#include "equiflux/errors.hpp"
#include "equiflux/quadrature.hpp"

namespace equiflux {

double weight_m(double h, double kappa) {
  return kappa == 0.0 ? h : std::min(h, 1.0 / kappa);
}

double weight_m_bar(double h, double kappa) {
  return kappa == 0.0 ? h / M_PI : std::min(h / M_PI, 1.0 / kappa);
}

double trace_constant_ct(double area, double h, double facet_len, double kappa) {
  if (!(kappa > 0.0))
    throw ZeroKappaTraceConstant("C_T is undefined for kappa = 0");
  const double d = 2.0;
  const double sq = facet_len / (d * area) / kappa *
                    std::sqrt(4.0 * h * h + (d / kappa) * (d / kappa));
  return std::sqrt(sq);
}

double trace_constant_ct_bar(double area, double h, double facet_len, double kappa) {
  const double d = 2.0;
  const double mbar = weight_m_bar(h, kappa);
  return std::sqrt(facet_len / (d * area) * mbar * (2.0 * h + d * mbar));
}

ProblemData build_problem_data(const Mesh& mesh, const ProblemSpec& problem) {
  ProblemData data;
  data.proj_f.reserve(mesh.n_elements());
  data.metrics.reserve(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    data.proj_f.push_back(project_affine_element(problem.source, mesh, k));
    data.metrics.push_back(element_metrics(mesh, k));
    if (mesh.elements[k].kappa == 0.0) data.has_zero_kappa = true;
  }
  data.neumann.assign(mesh.n_facets(), 0);
  data.proj_g.resize(mesh.n_facets());
  data.ct.assign(mesh.n_facets(), 0.0);
  data.ct_bar.assign(mesh.n_facets(), 0.0);
  for (int fi = 0; fi < mesh.n_facets(); ++fi) {
    const Facet& f = mesh.facets[fi];
    if (f.label != BoundaryLabel::neumann) continue;
    data.neumann[fi] = 1;
    data.proj_g[fi] = problem.neumann
                          ? project_affine_facet(problem.neumann, mesh, fi)
                          : AffineOnSeg{};
    const int k = f.left;
    const double kappa = mesh.elements[k].kappa;
    const ElementMetrics& m = data.metrics[k];
    data.ct_bar[fi] = trace_constant_ct_bar(m.area, m.h, f.length, kappa);
    if (kappa > 0.0)
      data.ct[fi] = trace_constant_ct(m.area, m.h, f.length, kappa);
    else
      data.has_zero_kappa_neumann = true;
  }
  return data;
}

namespace {

struct ElementNorms {
  double eps2 = 0.0;                 // ||tau - grad u_h||_K^2
  double r2 = 0.0;                   // ||Pi f - kappa^2 u_h + div tau||_K^2
  std::vector<std::pair<int, double>> rn2;  // (facet, ||R_N||_g^2)
};

ElementNorms element_norms(const Mesh& mesh, int k, const FluxField& tau,
                           const P1Solution& u_h, const ProblemData& data) {
  ElementNorms out;
  const auto& el = mesh.elements[k];
  const RT1Basis basis(mesh, k);
  const auto& c = tau.elem[k];
  const Vec2 grad_uh = u_h.gradient(mesh, k);
  const double k2 = el.kappa * el.kappa;
  const QuadratureRule& rule = cached_rule(4);
  const Vec2 p0 = mesh.vertices[el.v[0]], p1 = mesh.vertices[el.v[1]],
             p2 = mesh.vertices[el.v[2]];

  out.eps2 = integrate_triangle(rule, p0, p1, p2, [&](Vec2 x) {
    const Vec2 e = basis.value(c, x) - grad_uh;
    return dot(e, e);
  });
  out.r2 = integrate_triangle(rule, p0, p1, p2, [&](Vec2 x) {
    const double r =
        data.proj_f[k](x) - k2 * u_h.value(mesh, k, x) + basis.divergence(c, x);
    return r * r;
  });

  const SegmentRule& gauss2 = segment_rule(2);
  for (int i = 0; i < 3; ++i) {
    const int fi = el.facet[i];
    if (!data.neumann[fi]) continue;
    const Facet& f = mesh.facets[fi];
    const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
    double nrm2 = 0.0;
    for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
      const double t = gauss2.points[q];
      const Vec2 x = a + (b - a) * t;
      const double rn =
          data.proj_g[fi].at(t * f.length) - dot(basis.value(c, x), f.normal);
      nrm2 += gauss2.weights[q] * f.length * rn * rn;
    }
    out.rn2.emplace_back(fi, nrm2);
  }
  return out;
}

}  // namespace

double oscillation_element(const Mesh& mesh, int k, const ProblemSpec& problem,
                           const ProblemData& data) {
  const auto& el = mesh.elements[k];
  const ElementMetrics& m = data.metrics[k];
  const QuadratureRule& rule = cached_rule(10);
  const double f_res2 = integrate_triangle(
      rule, mesh.vertices[el.v[0]], mesh.vertices[el.v[1]], mesh.vertices[el.v[2]],
      [&](Vec2 x) {
        const double r = problem.source(x) - data.proj_f[k](x);
        return r * r;
      });
  double osc = weight_m_bar(m.h, el.kappa) * std::sqrt(f_res2);

  const SegmentRule& srule = segment_rule(6);
  for (int i = 0; i < 3; ++i) {
    const int fi = el.facet[i];
    if (!data.neumann[fi]) continue;
    const Facet& f = mesh.facets[fi];
    const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
    double g_res2 = 0.0;
    for (std::size_t q = 0; q < srule.points.size(); ++q) {
      const double t = srule.points[q];
      const double r = (problem.neumann ? problem.neumann(a + (b - a) * t) : 0.0) -
                       data.proj_g[fi].at(t * f.length);
      g_res2 += srule.weights[q] * f.length * r * r;
    }
    // min{C_T, C~_T}; C_T is undefined at kappa = 0, where C~_T applies
    const double w = el.kappa > 0.0 ? std::min(data.ct[fi], data.ct_bar[fi])
                                    : data.ct_bar[fi];
    osc += w * std::sqrt(g_res2);
  }
  return osc;
}

ElementIndicator indicator_element(const Mesh& mesh, int k, const FluxField& tau,
                                   const P1Solution& u_h, const ProblemSpec& problem,
                                   const ProblemData& data) {
  const ElementNorms n = element_norms(mesh, k, tau, u_h, data);
  const double kappa = mesh.elements[k].kappa;
  ElementIndicator ind;
  ind.eps_norm = std::sqrt(n.eps2);
  ind.r_norm = std::sqrt(n.r2);
  for (const auto& [fi, rn2] : n.rn2) {
    ind.neumann_sq += rn2;
    if (kappa > 0.0) ind.neumann_weighted += data.ct[fi] * std::sqrt(rn2);
  }
  if (kappa > 0.0) {
    ind.eta = std::sqrt(n.eps2 + n.r2 / (kappa * kappa)) + ind.neumann_weighted;
  } else {
    // r and R_N vanish for equilibrated fluxes on zero-kappa elements; the
    // second and third contributions are dropped here by definition.
    ind.eta = ind.eps_norm;
  }
  ind.osc = oscillation_element(mesh, k, problem, data);
  return ind;
}

ElementIndicator indicator_modified(const Mesh& mesh, int k, const FluxField& tau,
                                    const P1Solution& u_h, const ProblemSpec& problem,
                                    const ProblemData& data, double kappa0,
                                    double zeta0) {
  const double kappa = mesh.elements[k].kappa;
  if (kappa > 0.0) return indicator_element(mesh, k, tau, u_h, problem, data);
  const ElementNorms n = element_norms(mesh, k, tau, u_h, data);
  ElementIndicator ind;
  ind.eps_norm = std::sqrt(n.eps2);
  ind.r_norm = std::sqrt(n.r2);
  for (const auto& [fi, rn2] : n.rn2) {
    (void)fi;
    ind.neumann_sq += rn2;
  }
  ind.eta = std::sqrt(n.eps2 + n.r2 / (kappa0 * kappa0) +
                      ind.neumann_sq / (zeta0 * zeta0));
  ind.osc = oscillation_element(mesh, k, problem, data);
  return ind;
}

EstimateReport estimate_total(std::vector<ElementIndicator> indicators, FluxMode mode,
                              const ProblemSpec& problem, const ProblemData& data) {
  EstimateReport rep;
  rep.mode = mode;
  rep.kappa0 = problem.kappa0;
  rep.zeta0 = problem.zeta0;
  double sum = 0.0, osc2 = 0.0;
  for (const auto& ind : indicators) {
    sum += (ind.eta + ind.osc) * (ind.eta + ind.osc);
    osc2 += ind.osc * ind.osc;
  }
  rep.osc_total = std::sqrt(osc2);
  rep.prefactor = 1.0;
  if (mode == FluxMode::penalized) {
    if (data.has_zero_kappa) {
      if (!problem.friedrichs_constant)
        throw MissingConstants("penalized estimate with zero-kappa elements needs C_F");
      rep.c_f = problem.friedrichs_constant;
      rep.prefactor += problem.kappa0 * problem.kappa0 * (*rep.c_f) * (*rep.c_f);
    }
    if (data.has_zero_kappa_neumann) {
      if (!problem.trace_constant)
        throw MissingConstants(
            "penalized estimate with Neumann facets on zero-kappa elements needs C_T");
      rep.c_t = problem.trace_constant;
      rep.prefactor += problem.zeta0 * problem.zeta0 * (*rep.c_t) * (*rep.c_t);
    }
  }
  rep.total = std::sqrt(rep.prefactor * sum);
  rep.elements = std::move(indicators);
  return rep;
}

EquilibrationReport equilibration_residual(const Mesh& mesh, const FluxField& tau,
                                           const P1Solution& u_h,
                                           const ProblemSpec& problem,
                                           const ProblemData& data) {
  (void)problem;
  EquilibrationReport rep;
  const QuadratureRule& rule = cached_rule(4);
  const SegmentRule& gauss2 = segment_rule(2);
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    if (el.kappa != 0.0) continue;
    const RT1Basis basis(mesh, k);
    const auto& c = tau.elem[k];
    const Vec2 p0 = mesh.vertices[el.v[0]], p1 = mesh.vertices[el.v[1]],
               p2 = mesh.vertices[el.v[2]];
    double res2 = 0.0, pf2 = 0.0, dv2 = 0.0;
    const double i2[3] = {
        integrate_triangle(rule, p0, p1, p2,
                           [&](Vec2 x) {
                             const double r =
                                 data.proj_f[k](x) + basis.divergence(c, x);
                             return r * r;
                           }),
        integrate_triangle(rule, p0, p1, p2,
                           [&](Vec2 x) {
                             const double v = data.proj_f[k](x);
                             return v * v;
                           }),
        integrate_triangle(rule, p0, p1, p2,
                           [&](Vec2 x) {
                             const double v = basis.divergence(c, x);
                             return v * v;
                           })};
    res2 = i2[0];
    pf2 = i2[1];
    dv2 = i2[2];
    rep.max_element_residual = std::max(rep.max_element_residual, std::sqrt(res2));
    rep.scale = std::max({rep.scale, std::sqrt(pf2), std::sqrt(dv2)});

    for (int i = 0; i < 3; ++i) {
      const int fi = el.facet[i];
      if (!data.neumann[fi]) continue;
      const Facet& f = mesh.facets[fi];
      const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
      double rn2 = 0.0, pg2 = 0.0, tn2 = 0.0;
      for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
        const double t = gauss2.points[q];
        const Vec2 x = a + (b - a) * t;
        const double pg = data.proj_g[fi].at(t * f.length);
        const double tn = dot(basis.value(c, x), f.normal);
        const double w = gauss2.weights[q] * f.length;
        rn2 += w * (pg - tn) * (pg - tn);
        pg2 += w * pg * pg;
        tn2 += w * tn * tn;
      }
      rep.max_facet_residual = std::max(rep.max_facet_residual, std::sqrt(rn2));
      rep.scale = std::max({rep.scale, std::sqrt(pg2), std::sqrt(tn2)});
    }
  }
  (void)u_h;
  return rep;
}

EstimateReport estimate(const Mesh& mesh, const P1Solution& u_h,
                        const ProblemSpec& problem, const ProblemData& data,
                        const FluxField& tau, FluxMode mode) {
  std::vector<ElementIndicator> indicators;
  indicators.reserve(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    indicators.push_back(mode == FluxMode::constrained
                             ? indicator_element(mesh, k, tau, u_h, problem, data)
                             : indicator_modified(mesh, k, tau, u_h, problem, data,
                                                  problem.kappa0, problem.zeta0));
  }
  EstimateReport rep = estimate_total(std::move(indicators), mode, problem, data);
  const EquilibrationReport eq = equilibration_residual(mesh, tau, u_h, problem, data);
  rep.max_equilibration_residual = eq.relative();
  rep.equilibrated = rep.max_equilibration_residual <= 1e-9;
  return rep;
}

}  // namespace equiflux
