#pragma once

#include <Eigen/Dense>
#include <vector>

#include "equiflux/estimator.hpp"
#include "equiflux/fem.hpp"
#include "equiflux/mesh.hpp"
#include "equiflux/problems.hpp"
#include "equiflux/rt1.hpp"

namespace equiflux {

/// Global dof numbering of the broken RT1 space over one node patch with
/// normal-trace continuity across interior facets and zero normal trace on
/// the patch-boundary facets away from the node. Shared facet dofs appear
/// once; eliminated (zero) dofs are marked -1.
struct PatchFluxSpace {
  Patch patch;
  int n_free = 0;
  std::vector<std::array<int, 8>> dof_of_elem;  // aligned with patch.elements
};

PatchFluxSpace build_patch_space(const Mesh& mesh, const Patch& patch);

/// Quadratic functional E_n(c) = c^T M c - 2 g^T c + e_const subject to
/// A c = b (A empty in penalized mode). All entries are exact integrals of
/// polynomial integrands.
struct PatchSystem {
  Eigen::MatrixXd m;
  Eigen::VectorXd g;
  double e_const = 0.0;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;

  double functional(const Eigen::VectorXd& c) const {
    return c.dot(m * c) - 2.0 * g.dot(c) + e_const;
  }
};

PatchSystem assemble_patch_constrained(const Mesh& mesh, const PatchFluxSpace& space,
                                       const P1Solution& u_h,
                                       const ProblemData& data);

PatchSystem assemble_patch_penalized(const Mesh& mesh, const PatchFluxSpace& space,
                                     const P1Solution& u_h, const ProblemData& data,
                                     double kappa0, double zeta0);

/// Saddle-point solve: full-pivot factorization of the KKT matrix with a
/// minimum-norm orthogonal-factorization fallback when the multiplier block
/// is rank deficient. Throws SingularPrimalBlock when the functional block
/// itself is not positive definite.
struct PatchSolve {
  Eigen::VectorXd coeffs;
  double functional_value = 0.0;
  double constraint_residual = 0.0;  // infinity norm of A c - b
  bool used_min_norm = false;
};

PatchSolve solve_patch(const PatchSystem& system);

/// Sum of the patch contributions: per-element coefficient accumulation.
/// Throws MissingPatch unless every mesh node contributed.
FluxField accumulate_global(const Mesh& mesh,
                            const std::vector<PatchFluxSpace>& spaces,
                            const std::vector<PatchSolve>& solutions);

struct FluxResult {
  FluxField tau;
  std::vector<double> patch_energy;  // E_n(tau_n) per node
  double max_constraint_residual = 0.0;
  int min_norm_solves = 0;
};

/// Full reconstruction: one patch problem per mesh node, then accumulation.
FluxResult reconstruct_flux(const Mesh& mesh, const P1Solution& u_h,
                            const ProblemSpec& problem, const ProblemData& data,
                            FluxMode mode);

}  // namespace equiflux
