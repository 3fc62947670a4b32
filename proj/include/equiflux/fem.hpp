#pragma once

#include <functional>
#include <vector>

#include "equiflux/geometry.hpp"
#include "equiflux/mesh.hpp"
#include "equiflux/quadrature.hpp"

namespace equiflux {

struct ProblemSpec;  // problems.hpp

using ScalarField = std::function<double(Vec2)>;
using VectorField = std::function<Vec2(Vec2)>;

/// Conforming P1 space with homogeneous Dirichlet constraints: free dofs are
/// the nodes off the closure of the Dirichlet boundary.
struct DofMap {
  std::vector<int> node_to_dof;  // -1 for constrained nodes
  std::vector<int> free_nodes;   // dof -> node
  std::vector<int> dirichlet_nodes;

  int n_free() const { return static_cast<int>(free_nodes.size()); }
};

DofMap build_dofmap(const Mesh& mesh);

/// Compressed sparse rows, square, assembled once.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  /// Builds from per-row (column -> value) maps.
  explicit CsrMatrix(const std::vector<std::vector<std::pair<int, double>>>& rows);

  int rows() const { return static_cast<int>(row_ptr_.size()) - 1; }
  void multiply(const std::vector<double>& x, std::vector<double>& y) const;
  std::vector<double> diagonal() const;
  double coeff(int i, int j) const;

 private:
  std::vector<int> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

struct SparseSystem {
  CsrMatrix matrix;
  std::vector<double> rhs;
  DofMap dofs;
};

/// Nodal P1 function; constrained nodes carry their (zero) boundary values.
struct P1Solution {
  std::vector<double> nodal;

  double value(const Mesh& mesh, int k, const Vec2& x) const;
  Vec2 gradient(const Mesh& mesh, int k) const;
};

/// Gradients of the three barycentric (hat) functions on element k.
std::array<Vec2, 3> hat_gradients(const Mesh& mesh, int k);

/// Stiffness + reaction mass system for the model problem with homogeneous
/// Dirichlet data. The load is integrated with a degree-10 rule; Neumann data
/// with 6-point Gauss per facet. Throws EmptySystem when every node is
/// constrained and Error when the problem is ill-posed (no Dirichlet boundary
/// and kappa identically zero).
SparseSystem assemble(const Mesh& mesh, const ProblemSpec& problem);

/// Jacobi-preconditioned conjugate gradients; residual 2-norm reduced below
/// rel_tol times the initial one. Throws NoConvergence at the iteration cap.
std::vector<double> cg_solve(const CsrMatrix& a, const std::vector<double>& rhs,
                             double rel_tol = 1e-12, int max_iter = 0);

P1Solution solve_cg(const Mesh& mesh, const SparseSystem& system,
                    double rel_tol = 1e-12, int max_iter = 0);

/// max_i |F(theta_i) - B(u_h, theta_i)| over free nodes.
double galerkin_residual(const P1Solution& u_h, const SparseSystem& system);
double galerkin_residual(const Mesh& mesh, const P1Solution& u_h,
                         const ProblemSpec& problem);

/// Affine function a + bx (x - x0.x) + by (y - x0.y) on an element.
struct AffineOnTri {
  Vec2 x0;
  double a = 0.0, bx = 0.0, by = 0.0;

  double operator()(const Vec2& p) const {
    return a + bx * (p.x - x0.x) + by * (p.y - x0.y);
  }
  Vec2 grad() const { return {bx, by}; }
};

/// L2(K)-orthogonal projection onto affine functions.
AffineOnTri project_affine_element(const ScalarField& f, const Mesh& mesh, int k,
                                   int quad_degree = 10);

/// Affine function a + b s of the arclength s measured from facet.v[0].
struct AffineOnSeg {
  double a = 0.0, b = 0.0;
  double at(double s) const { return a + b * s; }
};

/// L2(facet)-orthogonal projection onto affine functions of arclength.
AffineOnSeg project_affine_facet(const ScalarField& g, const Mesh& mesh, int facet,
                                 int gauss_points = 6);

/// Energy norm sqrt(sum_K int |grad v|^2 + kappa_K^2 v^2) of a piecewise
/// smooth field given by value/gradient callables; kappa is taken from the
/// mesh elements.
double energy_norm(const Mesh& mesh, const ScalarField& v, const VectorField& grad_v,
                   int quad_degree = 10);
double energy_norm_adaptive(const Mesh& mesh, const ScalarField& v,
                            const VectorField& grad_v, double rel_tol);

/// Exact energy norm of a P1 function given by nodal values.
double energy_norm_p1(const Mesh& mesh, const std::vector<double>& nodal);

}  // namespace equiflux
