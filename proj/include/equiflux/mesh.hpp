#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "equiflux/geometry.hpp"

namespace equiflux {

enum class BoundaryLabel { interior, dirichlet, neumann };

/// Coefficient rule sampled at element centroids; empty means "inherit".
using KappaRule = std::function<double(Vec2)>;

/// Placement rule for the new vertex created when a boundary edge is split
/// (curved domains tracked by straight elements); empty means the midpoint.
using BoundaryProjector = std::function<Vec2(const Vec2&, const Vec2&)>;

struct Element {
  std::array<int, 3> v;      // vertex ids, counterclockwise
  std::array<int, 3> facet;  // facet opposite local vertex i
  double kappa = 0.0;        // per-element constant reaction coefficient
  int region = 0;
};

struct Facet {
  std::array<int, 2> v;  // endpoint ids; order fixes the P1 dof order on the facet
  int left = -1;         // element the global normal points out of
  int right = -1;        // second element, -1 on the boundary
  BoundaryLabel label = BoundaryLabel::interior;
  Vec2 normal;  // unit, from `left` towards `right` (outward on the boundary)
  double length = 0.0;

  bool interior() const { return right >= 0; }
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<Element> elements;
  std::vector<Facet> facets;
  std::vector<std::vector<int>> node_elements;  // sorted incidence lists

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_elements() const { return static_cast<int>(elements.size()); }
  int n_facets() const { return static_cast<int>(facets.size()); }

  Vec2 centroid(int k) const {
    const auto& e = elements[k];
    return (vertices[e.v[0]] + vertices[e.v[1]] + vertices[e.v[2]]) / 3.0;
  }
  /// Local index (0..2) of vertex `n` in element `k`, or -1.
  int local_vertex(int k, int n) const {
    for (int i = 0; i < 3; ++i)
      if (elements[k].v[i] == n) return i;
    return -1;
  }
};

struct ElementMetrics {
  double h = 0.0;     // diameter (longest edge)
  double rho = 0.0;   // inradius
  double area = 0.0;
  std::array<double, 3> facet_length{};   // facet opposite local vertex i
  std::array<Vec2, 3> outward_normal{};
};

/// Star of node n: elements touching n plus the facet classification used by
/// the patchwise flux problems.
struct Patch {
  int node = -1;
  std::vector<int> elements;            // sorted ascending
  std::vector<int> interior_facets;     // facets shared by two patch elements
  std::vector<int> ext_facets_no_node;  // boundary-of-patch facets not containing node
  std::vector<int> neumann_facets;      // Neumann facets containing node
  std::vector<int> zero_kappa_elements;
  std::vector<int> positive_kappa_elements;
};

struct TriangleSpec {
  std::array<int, 3> v;
  int region = 0;
};

struct BoundarySpec {
  int a = -1, b = -1;
  BoundaryLabel label = BoundaryLabel::dirichlet;
};

/// Builds a conforming mesh with full adjacency. Triangles given clockwise are
/// reoriented. Throws NonConforming (hanging node or facet shared by three
/// elements), DegenerateElement, UnlabeledBoundaryFacet.
Mesh build_mesh(const std::vector<Vec2>& vertices,
                const std::vector<TriangleSpec>& triangles,
                const std::vector<BoundarySpec>& boundary,
                const KappaRule& kappa = {});

ElementMetrics element_metrics(const Mesh& mesh, int k);

Patch node_patch(const Mesh& mesh, int n);

/// Conforming longest-edge bisection of the marked elements. Ties between
/// equally long edges are broken by the smaller global edge index. Child
/// elements inherit the region id; kappa is re-sampled at child centroids when
/// a rule is given, otherwise inherited. Throws RefinementOverflow when the
/// compatibility recursion exceeds max_depth.
Mesh bisect(const Mesh& mesh, const std::vector<int>& marked,
            const KappaRule& kappa = {}, int max_depth = 64,
            const BoundaryProjector& boundary_midpoint = {});

/// Same as bisect, additionally reporting the endpoints of the split edge for
/// every new vertex (for P1 prolongation onto the refined mesh).
struct BisectResult {
  Mesh mesh;
  std::vector<std::array<int, 2>> parent_edge;  // for vertices >= old count
};
BisectResult bisect_tracked(const Mesh& mesh, const std::vector<int>& marked,
                            const KappaRule& kappa = {}, int max_depth = 64,
                            const BoundaryProjector& boundary_midpoint = {});

/// Checks the slow-variation condition on kappa: for every element K with
/// h_K kappa_K > 1 and every element K' of the vertex-neighbourhood of K,
/// records the ratio kappa_K / kappa_K' (infinite if kappa_K' = 0).
struct KappaConditionReport {
  double worst_ratio = 1.0;
  std::vector<int> violations;  // elements with some ratio above the threshold
};
KappaConditionReport validate_kappa_condition(const Mesh& mesh, double c_threshold);

/// Smallest interior angle over the whole mesh (radians).
double min_angle(const Mesh& mesh);

// ASCII mesh format:
//   vertices N      followed by N lines  "x y"
//   triangles M     followed by M lines  "i j k region"
//   boundary B      followed by B lines  "i j label"   label in {dirichlet, neumann}
// Indices 0-based, coordinates with 17 significant digits.
void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(const std::string& path, const KappaRule& kappa = {});

}  // namespace equiflux
