#include "equiflux/rt1.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "equiflux/errors.hpp"
#include "equiflux/quadrature.hpp"

namespace equiflux {

namespace {

// Monomial fields in the scaled frame xh = (x - c)/s:
//   (1,0) (xh,0) (yh,0) (0,1) (0,xh) (0,yh) (xh^2, xh yh) (xh yh, yh^2)
Vec2 mono_eval(int m, const Vec2& xh) {
  switch (m) {
    case 0: return {1.0, 0.0};
    case 1: return {xh.x, 0.0};
    case 2: return {xh.y, 0.0};
    case 3: return {0.0, 1.0};
    case 4: return {0.0, xh.x};
    case 5: return {0.0, xh.y};
    case 6: return {xh.x * xh.x, xh.x * xh.y};
    default: return {xh.x * xh.y, xh.y * xh.y};
  }
}

// Divergence in the scaled frame (physical divergence carries a 1/s factor).
double mono_div(int m, const Vec2& xh) {
  switch (m) {
    case 1:
    case 5: return 1.0;
    case 6: return 3.0 * xh.x;
    case 7: return 3.0 * xh.y;
    default: return 0.0;
  }
}

}  // namespace

RT1Basis::RT1Basis(const Mesh& mesh, int element) {
  const auto& el = mesh.elements[element];
  const Vec2 p[3] = {mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                     mesh.vertices[el.v[2]]};
  center_ = (p[0] + p[1] + p[2]) / 3.0;
  scale_ = std::max({distance(p[0], p[1]), distance(p[1], p[2]), distance(p[2], p[0])});

  auto to_local = [&](const Vec2& x) { return (x - center_) / scale_; };

  // dof_i applied to the monomial fields
  Eigen::Matrix<double, 8, 8> dof_mat;
  const SegmentRule& gauss2 = segment_rule(2);
  for (int i = 0; i < 3; ++i) {
    const Facet& f = mesh.facets[el.facet[i]];
    const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
    for (int m = 0; m < 8; ++m) {
      double m0 = 0.0, m1 = 0.0;
      for (std::size_t q = 0; q < gauss2.points.size(); ++q) {
        const double t = gauss2.points[q];
        const Vec2 x = a + (b - a) * t;
        const double tn = dot(mono_eval(m, to_local(x)), f.normal);
        const double w = gauss2.weights[q] * f.length * tn;
        m0 += w * (1.0 - t);
        m1 += w * t;
      }
      dof_mat(2 * i, m) = m0;
      dof_mat(2 * i + 1, m) = m1;
    }
  }
  const QuadratureRule& rule = cached_rule(4);
  for (int m = 0; m < 8; ++m) {
    Vec2 moment{0.0, 0.0};
    const double area = 0.5 * std::abs(signed_area2(p[0], p[1], p[2]));
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = p[0] * l[0] + p[1] * l[1] + p[2] * l[2];
      moment += mono_eval(m, to_local(x)) * (rule.weights[q] * area);
    }
    dof_mat(6, m) = moment.x;
    dof_mat(7, m) = moment.y;
  }

  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(dof_mat);
  if (!lu.isInvertible())
    throw Error("RT1 dof matrix singular on element " + std::to_string(element));
  const Eigen::Matrix<double, 8, 8> inv = lu.inverse();
  // column j of inv = monomial coefficients of the basis field dual to dof j
  for (int j = 0; j < 8; ++j)
    for (int m = 0; m < 8; ++m) coef_[j][m] = inv(m, j);
  defect_ = (dof_mat * inv - Eigen::Matrix<double, 8, 8>::Identity())
                .cwiseAbs()
                .maxCoeff();
}

Vec2 RT1Basis::eval(int j, const Vec2& x) const {
  const Vec2 xh = (x - center_) / scale_;
  Vec2 v{0.0, 0.0};
  for (int m = 0; m < 8; ++m) {
    const double c = coef_[j][m];
    if (c != 0.0) v += mono_eval(m, xh) * c;
  }
  return v;
}

double RT1Basis::div(int j, const Vec2& x) const {
  const Vec2 xh = (x - center_) / scale_;
  double d = 0.0;
  for (int m = 0; m < 8; ++m) {
    const double c = coef_[j][m];
    if (c != 0.0) d += mono_div(m, xh) * c;
  }
  return d / scale_;
}

Vec2 RT1Basis::value(const std::array<double, 8>& c, const Vec2& x) const {
  const Vec2 xh = (x - center_) / scale_;
  std::array<double, 8> mono{};
  for (int j = 0; j < 8; ++j)
    for (int m = 0; m < 8; ++m) mono[m] += c[j] * coef_[j][m];
  Vec2 v{0.0, 0.0};
  for (int m = 0; m < 8; ++m) v += mono_eval(m, xh) * mono[m];
  return v;
}

double RT1Basis::divergence(const std::array<double, 8>& c, const Vec2& x) const {
  const Vec2 xh = (x - center_) / scale_;
  double d = 0.0;
  for (int j = 0; j < 8; ++j)
    for (int m = 0; m < 8; ++m) d += c[j] * coef_[j][m] * mono_div(m, xh);
  return d / scale_;
}

Vec2 flux_value(const Mesh& mesh, const FluxField& tau, int element, const Vec2& x) {
  return RT1Basis(mesh, element).value(tau.elem[element], x);
}

double flux_divergence(const Mesh& mesh, const FluxField& tau, int element,
                       const Vec2& x) {
  return RT1Basis(mesh, element).divergence(tau.elem[element], x);
}

NormalJumpReport max_normal_jump(const Mesh& mesh, const FluxField& tau) {
  NormalJumpReport rep;
  const SegmentRule& gauss2 = segment_rule(2);
  std::vector<std::unique_ptr<RT1Basis>> cache(mesh.n_elements());
  auto basis = [&](int k) -> RT1Basis& {
    if (!cache[k]) cache[k] = std::make_unique<RT1Basis>(mesh, k);
    return *cache[k];
  };
  for (const Facet& f : mesh.facets) {
    if (!f.interior()) continue;
    const Vec2 a = mesh.vertices[f.v[0]], b = mesh.vertices[f.v[1]];
    for (double t : gauss2.points) {
      const Vec2 x = a + (b - a) * t;
      const double tl = dot(basis(f.left).value(tau.elem[f.left], x), f.normal);
      const double tr = dot(basis(f.right).value(tau.elem[f.right], x), f.normal);
      rep.max_jump = std::max(rep.max_jump, std::abs(tl - tr));
      rep.scale = std::max({rep.scale, std::abs(tl), std::abs(tr)});
    }
  }
  return rep;
}

}  // namespace equiflux
