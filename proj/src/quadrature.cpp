#include "equiflux/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "equiflux/errors.hpp"

namespace equiflux {

namespace {

// Gauss nodes/weights on [-1,1] for the Jacobi weight (1-t)^alpha (1+t)^beta,
// via Golub-Welsch on the symmetric recurrence tridiagonal.
void gauss_jacobi(int n, double alpha, double beta, std::vector<double>& nodes,
                  std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  const double ab = alpha + beta;
  for (int k = 0; k < n; ++k) {
    const double den = (2.0 * k + ab) * (2.0 * k + ab + 2.0);
    J(k, k) = den == 0.0 ? 0.0 : (beta * beta - alpha * alpha) / den;
  }
  for (int k = 1; k < n; ++k) {
    const double num = 4.0 * k * (k + alpha) * (k + beta) * (k + ab);
    const double den = (2.0 * k + ab) * (2.0 * k + ab) * (2.0 * k + ab + 1.0) *
                       (2.0 * k + ab - 1.0);
    const double b2 = num / den;
    J(k, k - 1) = J(k - 1, k) = std::sqrt(b2);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::pow(2.0, ab + 1.0) * std::beta(alpha + 1.0, beta + 1.0);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = mu0 * v0 * v0;
  }
}

// Conical-product rule on the reference triangle: Gauss-Legendre in one
// direction, Gauss-Jacobi (1,0) in the collapsed one. Exact for total degree
// 2n-1 with n^2 points, all interior, all weights positive.
QuadratureRule conical_rule(int degree) {
  const int n = degree / 2 + 1;
  std::vector<double> xi, wxi, eta, weta;
  gauss_jacobi(n, 0.0, 0.0, xi, wxi);
  gauss_jacobi(n, 1.0, 0.0, eta, weta);
  QuadratureRule rule;
  rule.exact_degree = 2 * n - 1;
  rule.points.reserve(n * n);
  rule.weights.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    const double s = 0.5 * (1.0 + xi[i]);  // [0,1]
    const double ws = 0.5 * wxi[i];        // sums to 1
    for (int j = 0; j < n; ++j) {
      const double t = 0.5 * (1.0 + eta[j]);  // [0,1]
      const double wt = 0.25 * weta[j];       // sums to 1/2
      const double x = s * (1.0 - t);
      const double y = t;
      rule.points.push_back({1.0 - x - y, x, y});
      rule.weights.push_back(2.0 * ws * wt);  // sums to 1
    }
  }
  return rule;
}

// Average a rule over the six barycentric permutations.
QuadratureRule symmetrize(const QuadratureRule& in) {
  static const int perm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                 {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  QuadratureRule out;
  out.exact_degree = in.exact_degree;
  out.points.reserve(6 * in.size());
  out.weights.reserve(6 * in.size());
  for (std::size_t q = 0; q < in.size(); ++q) {
    for (const auto& p : perm) {
      out.points.push_back(
          {in.points[q][p[0]], in.points[q][p[1]], in.points[q][p[2]]});
      out.weights.push_back(in.weights[q] / 6.0);
    }
  }
  return out;
}

void push_orbit1(QuadratureRule& r, double w) {
  r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r.weights.push_back(w);
}

// Orbit of (a, b, b), a + 2b = 1: three points.
void push_orbit3(QuadratureRule& r, double a, double w) {
  const double b = 0.5 * (1.0 - a);
  r.points.push_back({a, b, b});
  r.points.push_back({b, a, b});
  r.points.push_back({b, b, a});
  for (int i = 0; i < 3; ++i) r.weights.push_back(w);
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Exactness self-test: monomial x^p y^q over the reference triangle equals
// p! q! / (p+q+2)!.
void self_test(const QuadratureRule& rule, int degree) {
  double wsum = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    if (!(rule.weights[q] > 0.0))
      throw UnsupportedDegree("quadrature self-test: non-positive weight");
    wsum += rule.weights[q];
  }
  if (std::abs(wsum - 1.0) > 1e-14)
    throw UnsupportedDegree("quadrature self-test: weights do not sum to 1");
  for (int p = 0; p <= degree; ++p) {
    for (int q = 0; p + q <= degree; ++q) {
      double val = 0.0;
      for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.points[i][1];
        const double y = rule.points[i][2];
        val += rule.weights[i] * std::pow(x, p) * std::pow(y, q);
      }
      val *= 0.5;  // reference area
      const double exact = factorial(p) * factorial(q) / factorial(p + q + 2);
      if (std::abs(val - exact) > 1e-13 * std::max(1.0, std::abs(exact)))
        throw UnsupportedDegree("quadrature self-test: monomial x^" +
                                std::to_string(p) + " y^" + std::to_string(q) +
                                " not integrated exactly");
    }
  }
}

QuadratureRule make_rule(int degree) {
  if (degree < 1 || degree > 20)
    throw UnsupportedDegree("triangle quadrature degree must be in [1,20], got " +
                            std::to_string(degree));
  QuadratureRule rule;
  switch (degree) {
    case 1:
      push_orbit1(rule, 1.0);
      rule.exact_degree = 1;
      break;
    case 2:
      push_orbit3(rule, 2.0 / 3.0, 1.0 / 3.0);
      rule.exact_degree = 2;
      break;
    case 3:
    case 4:
      // Dunavant degree-4, 6 points, positive weights.
      push_orbit3(rule, 0.816847572980459, 0.109951743655322);
      push_orbit3(rule, 0.108103018168070, 0.223381589678011);
      rule.exact_degree = 4;
      break;
    case 5:
      push_orbit1(rule, 9.0 / 40.0);
      push_orbit3(rule, 0.797426985353087, 0.125939180544827);
      push_orbit3(rule, 0.059715871789770, 0.132394152788506);
      rule.exact_degree = 5;
      break;
    default:
      rule = symmetrize(conical_rule(degree));
      break;
  }
  self_test(rule, degree);
  return rule;
}

}  // namespace

QuadratureRule quadrature_rule(int degree) { return make_rule(degree); }

const QuadratureRule& cached_rule(int degree) {
  static std::mutex mtx;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(degree);
  if (it == cache.end()) it = cache.emplace(degree, make_rule(degree)).first;
  return it->second;
}

const SegmentRule& segment_rule(int n_points) {
  static std::mutex mtx;
  static std::map<int, SegmentRule> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n_points);
  if (it == cache.end()) {
    std::vector<double> t, w;
    gauss_jacobi(n_points, 0.0, 0.0, t, w);
    SegmentRule r;
    r.points.resize(n_points);
    r.weights.resize(n_points);
    for (int i = 0; i < n_points; ++i) {
      r.points[i] = 0.5 * (1.0 + t[i]);
      r.weights[i] = 0.5 * w[i];
    }
    it = cache.emplace(n_points, std::move(r)).first;
  }
  return it->second;
}

namespace {

const QuadratureRule& cached_conical10() {
  static const QuadratureRule rule = [] {
    QuadratureRule r = conical_rule(10);
    self_test(r, 10);
    return r;
  }();
  return rule;
}

// One refinement candidate: a cell whose own rule value is known; its error
// estimate is the difference against the sum over its four midpoint children.
struct AdaptiveCell {
  Vec2 a, b, c;
  double fine = 0.0;  // sum of the four child rule values
  double err = 0.0;
  int depth = 0;
};

AdaptiveCell make_cell(const std::function<double(Vec2)>& f, const Vec2& a,
                       const Vec2& b, const Vec2& c, double coarse, int depth) {
  const QuadratureRule& rule = cached_conical10();
  const Vec2 mab = (a + b) * 0.5, mbc = (b + c) * 0.5, mca = (c + a) * 0.5;
  AdaptiveCell cell{a, b, c, 0.0, 0.0, depth};
  cell.fine = integrate_triangle(rule, a, mab, mca, f) +
              integrate_triangle(rule, mab, b, mbc, f) +
              integrate_triangle(rule, mca, mbc, c, f) +
              integrate_triangle(rule, mab, mbc, mca, f);
  cell.err = std::abs(cell.fine - coarse);
  return cell;
}

}  // namespace

// Global greedy refinement: the cell with the worst two-level disagreement is
// quadrisected until the summed disagreements meet the tolerance. Handles
// boundary layers and corner singularities with the same budget.
double integrate_adaptive(const std::function<double(Vec2)>& f, const Vec2& a,
                          const Vec2& b, const Vec2& c, double rel_tol, int max_depth,
                          double abs_tol) {
  const QuadratureRule& rule = cached_conical10();
  struct HeapItem {
    double err;
    std::size_t id;
    bool operator<(const HeapItem& o) const {
      if (err != o.err) return err < o.err;
      return id > o.id;  // deterministic tie break: older cell first
    }
  };
  std::vector<AdaptiveCell> live;
  std::vector<HeapItem> heap;  // max-heap over live indices
  double total = 0.0, err_total = 0.0;

  auto push = [&](AdaptiveCell cell) {
    total += cell.fine;
    err_total += cell.err;
    heap.push_back({cell.err, live.size()});
    std::push_heap(heap.begin(), heap.end());
    live.push_back(cell);
  };
  auto resum = [&] {
    total = err_total = 0.0;
    for (const HeapItem& item : heap) {
      total += live[item.id].fine;
      err_total += live[item.id].err;
    }
  };

  push(make_cell(f, a, b, c, integrate_triangle(rule, a, b, c, f), 0));

  long steps = 0;
  while (err_total >
         std::max(abs_tol, rel_tol * std::max(std::abs(total), 1e-300))) {
    std::pop_heap(heap.begin(), heap.end());
    const AdaptiveCell cell = live[heap.back().id];
    heap.pop_back();
    if (cell.depth >= max_depth)
      throw MaxDepthExceeded("integrate_adaptive: no convergence at depth " +
                             std::to_string(max_depth));
    total -= cell.fine;
    err_total -= cell.err;
    const Vec2 mab = (cell.a + cell.b) * 0.5, mbc = (cell.b + cell.c) * 0.5,
               mca = (cell.c + cell.a) * 0.5;
    push(make_cell(f, cell.a, mab, mca,
                   integrate_triangle(rule, cell.a, mab, mca, f), cell.depth + 1));
    push(make_cell(f, mab, cell.b, mbc,
                   integrate_triangle(rule, mab, cell.b, mbc, f), cell.depth + 1));
    push(make_cell(f, mca, mbc, cell.c,
                   integrate_triangle(rule, mca, mbc, cell.c, f), cell.depth + 1));
    push(make_cell(f, mab, mbc, mca,
                   integrate_triangle(rule, mab, mbc, mca, f), cell.depth + 1));
    // incremental sums drift over long runs; refresh periodically
    if (++steps % 4096 == 0) resum();
  }
  resum();
  return total;
}

}  // namespace equiflux
