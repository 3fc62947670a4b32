#pragma once

#include <optional>
#include <vector>

#include "equiflux/fem.hpp"
#include "equiflux/mesh.hpp"
#include "equiflux/problems.hpp"
#include "equiflux/rt1.hpp"

namespace equiflux {

enum class FluxMode { constrained, penalized };

// -- trace constants ---------------------------------------------------------
// (C_T^{K,g})^2  = |g|/(d |K|) (1/k) sqrt((2h)^2 + (d/k)^2)        (k > 0)
// (C~_T^{K,g})^2 = |g|/(d |K|) mbar (2h + d mbar),  mbar = min{h/pi, 1/k}
// with d = 2 and the convention min{., 1/k} -> first argument at k = 0.

double weight_m(double h, double kappa);       // min{h, 1/kappa}
double weight_m_bar(double h, double kappa);   // min{h/pi, 1/kappa}
double trace_constant_ct(double area, double h, double facet_len, double kappa);
double trace_constant_ct_bar(double area, double h, double facet_len, double kappa);

/// Per-mesh data shared by the flux reconstruction and the estimator:
/// elementwise projections of f, facet projections of g_N, trace constants,
/// element metrics.
struct ProblemData {
  std::vector<AffineOnTri> proj_f;          // per element
  std::vector<ElementMetrics> metrics;      // per element
  std::vector<char> neumann;                // per facet
  std::vector<AffineOnSeg> proj_g;          // per facet, valid on Neumann facets
  std::vector<double> ct;                   // per facet, valid when kappa_K > 0
  std::vector<double> ct_bar;               // per facet, valid on Neumann facets
  bool has_zero_kappa = false;
  bool has_zero_kappa_neumann = false;      // Neumann facet on a kappa = 0 element
};

ProblemData build_problem_data(const Mesh& mesh, const ProblemSpec& problem);

// -- indicators ---------------------------------------------------------------

struct ElementIndicator {
  double eps_norm = 0.0;     // ||tau - grad u_h||_K
  double r_norm = 0.0;       // ||Pi f - kappa^2 u_h + div tau||_K
  double neumann_sq = 0.0;   // sum_g ||R_N||_g^2
  double neumann_weighted = 0.0;  // sum_g C_T ||R_N||_g (kappa > 0 only)
  double eta = 0.0;
  double osc = 0.0;
};

double oscillation_element(const Mesh& mesh, int k, const ProblemSpec& problem,
                           const ProblemData& data);

ElementIndicator indicator_element(const Mesh& mesh, int k, const FluxField& tau,
                                   const P1Solution& u_h, const ProblemSpec& problem,
                                   const ProblemData& data);

ElementIndicator indicator_modified(const Mesh& mesh, int k, const FluxField& tau,
                                    const P1Solution& u_h, const ProblemSpec& problem,
                                    const ProblemData& data, double kappa0,
                                    double zeta0);

// -- aggregation ---------------------------------------------------------------

struct EstimateReport {
  std::vector<ElementIndicator> elements;
  FluxMode mode = FluxMode::constrained;
  double total = 0.0;      // eta (constrained) or eta~ (penalized, with prefactor)
  double osc_total = 0.0;  // sqrt(sum osc_K^2)
  double prefactor = 1.0;  // 1 + kappa0^2 C_F^2 + zeta0^2 C_T^2 where applicable
  double kappa0 = 0.0, zeta0 = 0.0;
  std::optional<double> c_f, c_t;
  double max_equilibration_residual = 0.0;  // relative to the data scale
  bool equilibrated = false;                // residual gate for the guarantee
  std::optional<double> error;
  std::optional<double> ieff;
};

/// Aggregates indicators: constrained total^2 = sum (eta_K + osc_K)^2;
/// penalized multiplies by the prefactor. Throws MissingConstants when the
/// penalized mode needs C_F (zero-kappa elements) or C_T (Neumann facets of
/// zero-kappa elements) and the problem does not provide them.
EstimateReport estimate_total(std::vector<ElementIndicator> indicators, FluxMode mode,
                              const ProblemSpec& problem, const ProblemData& data);

/// Residuals of the equilibration conditions on zero-kappa elements:
/// ||Pi f - kappa^2 u_h + div tau||_K and ||Pi g - tau.n||_g on their Neumann
/// facets, reported relative to the data scale.
struct EquilibrationReport {
  double max_element_residual = 0.0;  // absolute
  double max_facet_residual = 0.0;    // absolute
  double scale = 0.0;
  double relative() const {
    const double m = std::max(max_element_residual, max_facet_residual);
    return scale > 0.0 ? m / scale : m;
  }
};
EquilibrationReport equilibration_residual(const Mesh& mesh, const FluxField& tau,
                                           const P1Solution& u_h,
                                           const ProblemSpec& problem,
                                           const ProblemData& data);

/// Full pipeline step: indicators + oscillation + totals + equilibration gate.
EstimateReport estimate(const Mesh& mesh, const P1Solution& u_h,
                        const ProblemSpec& problem, const ProblemData& data,
                        const FluxField& tau, FluxMode mode);

}  // namespace equiflux
