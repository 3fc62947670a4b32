#pragma once

#include <functional>
#include <optional>
#include <string>

#include "equiflux/fem.hpp"
#include "equiflux/mesh.hpp"

namespace equiflux {

struct ExactSolution {
  ScalarField value;
  VectorField gradient;
};

/// Everything that defines one model problem instance: initial mesh factory,
/// coefficient rule (sampled at element centroids), data fields, optional
/// exact solution, and the global constants used by the penalized estimator.
struct ProblemSpec {
  std::string id;
  std::function<Mesh()> initial_mesh;
  KappaRule kappa;
  ScalarField source;   // f
  ScalarField neumann;  // g_N; empty when the Neumann boundary is empty
  std::optional<ExactSolution> exact;
  std::optional<double> friedrichs_constant;  // C_F
  std::optional<double> trace_constant;       // global C_T
  BoundaryProjector boundary_midpoint;        // curved-boundary refinement rule
  double kappa0 = 1.4901161193847656e-08;     // sqrt(machine epsilon)
  double zeta0 = 1.4901161193847656e-08;
};

// -- mesh generators --------------------------------------------------------

using BoundaryRule = std::function<BoundaryLabel(Vec2)>;

/// nx-by-ny grid of squares, each split along the same diagonal.
Mesh uniform_square_mesh(Vec2 lo, Vec2 hi, int nx, int ny, const BoundaryRule& label,
                         const KappaRule& kappa = {});

Mesh two_triangle_square(Vec2 lo, Vec2 hi, const BoundaryRule& label,
                         const KappaRule& kappa = {});

/// Polygonal approximation of the three-quarter disc sector
/// {0 <= r < 1, phi in (pi/2, 2 pi)} whose arc is inscribed with `segments`
/// chords. Graded polar construction: angular resolution halves towards the
/// centre so elements stay isotropic. All boundary facets Dirichlet.
Mesh sector_polygon_mesh(int segments, const KappaRule& kappa = {});

// -- problem catalog --------------------------------------------------------

/// Boundary-layer problem on (-1,1)^2: Dirichlet at x = +-1, homogeneous
/// Neumann at y = +-1, f = kappa^2, exact u = 1 - cosh(kappa x)/cosh(kappa).
ProblemSpec layer_problem_spec(double kappa, int n = 16);

/// Smooth manufactured problem on the unit square: u = sin(pi x) sin(pi y),
/// kappa = 1, pure Dirichlet.
ProblemSpec sinsin_spec(int n = 8);

/// Sector with reentrant corner, pure Dirichlet, constant kappa,
/// f = kappa^2 r^{2/3} sin((2 phi - pi)/3); exact solution built from the
/// scaled modified Bessel functions.
ProblemSpec example1_spec(double kappa, int boundary_segments = 64);

/// Square (-1,1)^2 with pure homogeneous Neumann boundary, kappa and
/// f = kappa^2 supported on the disc of radius 1/2 (centroid-sampled).
/// Carries C_F^2 = 2/pi^2 and C_T^2 = sqrt(2) coth(sqrt(2)/2).
ProblemSpec example2_spec(double kappa);

/// Piecewise coefficient kappa in {0, kappa_pos} split at x = 0 on (-1,1)^2,
/// f = 1, Dirichlet at x = 1, Neumann elsewhere with g_N = 0.3.
ProblemSpec half_kappa_spec(double kappa_pos = 10.0, int n = 8);

/// Problem lookup for the CLI: known ids are layer, sinsin, sector,
/// square-disc, half-kappa. Throws ProblemNotFound.
ProblemSpec problem_by_id(const std::string& id, double kappa, int n, int segments);

// -- errors and effectivity ---------------------------------------------------

/// |||u - u_h||| against the problem's exact solution, element by element with
/// adaptive quadrature. Throws MissingExactSolution.
double exact_error(const Mesh& mesh, const P1Solution& u_h, const ProblemSpec& spec,
                   double rel_tol = 1e-10);

/// |||u_ref - u_h||| against a P1 reference on the twice uniformly bisected
/// mesh (used when no exact solution is available).
double reference_error(const Mesh& mesh, const P1Solution& u_h,
                       const ProblemSpec& spec, double solver_tol = 1e-12);

/// estimator total / error. Throws ZeroError for a non-positive error.
double effectivity(double estimator_total, double error);

}  // namespace equiflux
