#pragma once

#include <array>

#include "equiflux/geometry.hpp"
#include "equiflux/mesh.hpp"

namespace equiflux {

/// Local Raviart-Thomas basis of degree 1 on one element: [P1]^2 + x P1,
/// eight degrees of freedom. Dof convention (shared across elements through
/// the mesh facets, which makes H(div) conformity structural):
///   dof 2i, 2i+1 : moments of the normal trace on the facet opposite local
///                  vertex i against the P1 Lagrange basis of the facet, taken
///                  in the facet's global orientation (stored endpoint order
///                  and stored normal direction);
///   dof 6, 7     : moments of the field against the constant fields (1,0)
///                  and (0,1) over the element.
/// The basis is dual to these functionals; rt1_unisolvence_defect reports how
/// far dof_i(phi_j) is from the identity.
class RT1Basis {
 public:
  RT1Basis(const Mesh& mesh, int element);

  Vec2 eval(int j, const Vec2& x) const;
  double div(int j, const Vec2& x) const;

  /// Field and divergence for a coefficient vector in this basis.
  Vec2 value(const std::array<double, 8>& c, const Vec2& x) const;
  double divergence(const std::array<double, 8>& c, const Vec2& x) const;

  double unisolvence_defect() const { return defect_; }

 private:
  Vec2 center_;
  double scale_ = 1.0;
  // coefficients of each basis field in the scaled monomial basis
  std::array<std::array<double, 8>, 8> coef_{};
  double defect_ = 0.0;
};

/// Reconstructed flux: one RT1 coefficient set per mesh element (all-zero
/// where no patch contributed).
struct FluxField {
  std::vector<std::array<double, 8>> elem;
};

Vec2 flux_value(const Mesh& mesh, const FluxField& tau, int element, const Vec2& x);
double flux_divergence(const Mesh& mesh, const FluxField& tau, int element,
                       const Vec2& x);

/// Largest normal-trace jump across interior facets, evaluated at two Gauss
/// points per facet, together with the largest trace magnitude (the scale for
/// the H(div) conformity tolerance).
struct NormalJumpReport {
  double max_jump = 0.0;
  double scale = 0.0;
};
NormalJumpReport max_normal_jump(const Mesh& mesh, const FluxField& tau);

}  // namespace equiflux
