#include "equiflux/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "equiflux/errors.hpp"

namespace equiflux {

namespace {

int64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<int64_t>(a) << 32) | static_cast<uint32_t>(b);
}

struct MeshBuilder {
  std::vector<Vec2> verts;
  std::vector<TriangleSpec> tris;
  std::vector<double> kappas;
  std::map<int64_t, BoundaryLabel> labels;

  // Assembles topology; `trusted` skips the hanging-node scan (used after
  // refinement, where conformity holds by construction).
  Mesh finalize(bool trusted) const;
};

Mesh MeshBuilder::finalize(bool trusted) const {
  Mesh mesh;
  mesh.vertices = verts;
  const int nv = mesh.n_vertices();

  {
    std::map<std::pair<double, double>, int> seen;
    for (int i = 0; i < nv; ++i) {
      if (!std::isfinite(verts[i].x) || !std::isfinite(verts[i].y))
        throw Error("vertex " + std::to_string(i) + " has non-finite coordinates");
      auto [it, fresh] = seen.emplace(std::make_pair(verts[i].x, verts[i].y), i);
      if (!fresh)
        throw NonConforming("duplicate vertices " + std::to_string(it->second) +
                            " and " + std::to_string(i));
    }
  }

  mesh.elements.resize(tris.size());
  for (std::size_t k = 0; k < tris.size(); ++k) {
    auto t = tris[k].v;
    for (int i : t)
      if (i < 0 || i >= nv)
        throw Error("triangle " + std::to_string(k) + ": vertex index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw DegenerateElement("triangle " + std::to_string(k) + " repeats a vertex");
    double a2 = signed_area2(verts[t[0]], verts[t[1]], verts[t[2]]);
    if (a2 < 0.0) {
      std::swap(t[1], t[2]);
      a2 = -a2;
    }
    const double hh = std::max({distance(verts[t[0]], verts[t[1]]),
                                distance(verts[t[1]], verts[t[2]]),
                                distance(verts[t[2]], verts[t[0]])});
    if (!(a2 > 1e-14 * hh * hh))
      throw DegenerateElement("triangle " + std::to_string(k) + " has zero area");
    mesh.elements[k].v = t;
    mesh.elements[k].region = tris[k].region;
    const double kap = kappas[k];
    if (!(kap >= 0.0))
      throw Error("triangle " + std::to_string(k) + ": kappa must be >= 0");
    mesh.elements[k].kappa = kap;
  }

  // Facets in deterministic order: elements ascending, local facet opposite
  // vertex i.
  std::unordered_map<int64_t, int> facet_of;
  facet_of.reserve(3 * tris.size());
  for (int k = 0; k < mesh.n_elements(); ++k) {
    auto& el = mesh.elements[k];
    for (int i = 0; i < 3; ++i) {
      const int a = el.v[(i + 1) % 3];
      const int b = el.v[(i + 2) % 3];
      const int64_t key = edge_key(a, b);
      auto it = facet_of.find(key);
      if (it == facet_of.end()) {
        Facet f;
        f.v = {std::min(a, b), std::max(a, b)};
        f.left = k;
        f.length = distance(verts[f.v[0]], verts[f.v[1]]);
        mesh.facets.push_back(f);
        facet_of.emplace(key, mesh.n_facets() - 1);
        el.facet[i] = mesh.n_facets() - 1;
      } else {
        Facet& f = mesh.facets[it->second];
        if (f.right >= 0)
          throw NonConforming("facet (" + std::to_string(a) + "," +
                              std::to_string(b) + ") shared by three elements");
        f.right = k;
        el.facet[i] = it->second;
      }
    }
  }

  for (auto& f : mesh.facets) {
    if (f.interior() && f.left > f.right) std::swap(f.left, f.right);
    // unit normal out of `left`
    const Vec2 a = verts[f.v[0]], b = verts[f.v[1]];
    Vec2 n{(b - a).y, -(b - a).x};
    n = n / norm(n);
    const Vec2 mid = (a + b) * 0.5;
    if (dot(n, mesh.centroid(f.left) - mid) > 0.0) n = n * (-1.0);
    f.normal = n;
  }

  if (!trusted) {
    // Hanging-node scan: a vertex strictly inside a boundary-looking facet
    // means two elements meet edge-to-mid-edge somewhere.
    for (const Facet& f : mesh.facets) {
      if (f.interior()) continue;
      const Vec2 a = verts[f.v[0]], d = verts[f.v[1]] - verts[f.v[0]];
      const double len2 = dot(d, d);
      for (int i = 0; i < nv; ++i) {
        if (i == f.v[0] || i == f.v[1]) continue;
        const Vec2 p = verts[i] - a;
        if (std::abs(cross(d, p)) > 1e-12 * len2) continue;
        const double t = dot(d, p) / len2;
        if (t > 1e-12 && t < 1.0 - 1e-12)
          throw NonConforming("hanging node " + std::to_string(i) +
                              " on facet (" + std::to_string(f.v[0]) + "," +
                              std::to_string(f.v[1]) + ")");
      }
    }
  }

  // Boundary labels; interior facets must not be labeled, boundary facets must.
  for (int fi = 0; fi < mesh.n_facets(); ++fi) {
    Facet& f = mesh.facets[fi];
    const auto it = labels.find(edge_key(f.v[0], f.v[1]));
    if (f.interior()) {
      if (it != labels.end())
        throw Error("boundary marker given for interior facet (" +
                    std::to_string(f.v[0]) + "," + std::to_string(f.v[1]) + ")");
      f.label = BoundaryLabel::interior;
    } else {
      if (it == labels.end())
        throw UnlabeledBoundaryFacet("boundary facet (" + std::to_string(f.v[0]) +
                                     "," + std::to_string(f.v[1]) +
                                     ") carries no label");
      f.label = it->second;
    }
  }
  for (const auto& [key, label] : labels) {
    (void)label;
    if (facet_of.find(key) == facet_of.end())
      throw Error("boundary marker does not match any mesh facet");
  }

  mesh.node_elements.assign(nv, {});
  for (int k = 0; k < mesh.n_elements(); ++k)
    for (int i : mesh.elements[k].v) mesh.node_elements[i].push_back(k);
  for (auto& incidence : mesh.node_elements) std::sort(incidence.begin(), incidence.end());

  return mesh;
}

}  // namespace

Mesh build_mesh(const std::vector<Vec2>& vertices,
                const std::vector<TriangleSpec>& triangles,
                const std::vector<BoundarySpec>& boundary, const KappaRule& kappa) {
  MeshBuilder b;
  b.verts = vertices;
  b.tris = triangles;
  b.kappas.resize(triangles.size(), 0.0);
  for (std::size_t k = 0; k < triangles.size(); ++k) {
    if (kappa) {
      const auto& t = triangles[k].v;
      bool ok = true;
      for (int i : t)
        ok = ok && i >= 0 && i < static_cast<int>(vertices.size());
      if (!ok) throw Error("triangle vertex index out of range");
      b.kappas[k] = kappa((vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0);
    }
  }
  for (const auto& s : boundary) {
    if (s.a < 0 || s.a >= static_cast<int>(vertices.size()) || s.b < 0 ||
        s.b >= static_cast<int>(vertices.size()) || s.a == s.b)
      throw Error("boundary marker has invalid vertex indices");
    if (s.label == BoundaryLabel::interior)
      throw Error("boundary marker must be dirichlet or neumann");
    auto [it, fresh] = b.labels.emplace(edge_key(s.a, s.b), s.label);
    if (!fresh && it->second != s.label)
      throw Error("conflicting boundary markers for one facet");
  }
  return b.finalize(false);
}

ElementMetrics element_metrics(const Mesh& mesh, int k) {
  const auto& el = mesh.elements[k];
  const Vec2 p[3] = {mesh.vertices[el.v[0]], mesh.vertices[el.v[1]],
                     mesh.vertices[el.v[2]]};
  ElementMetrics m;
  for (int i = 0; i < 3; ++i)
    m.facet_length[i] = distance(p[(i + 1) % 3], p[(i + 2) % 3]);
  m.h = std::max({m.facet_length[0], m.facet_length[1], m.facet_length[2]});
  m.area = 0.5 * std::abs(signed_area2(p[0], p[1], p[2]));
  const double s = 0.5 * (m.facet_length[0] + m.facet_length[1] + m.facet_length[2]);
  m.rho = m.area / s;
  for (int i = 0; i < 3; ++i) {
    const Facet& f = mesh.facets[el.facet[i]];
    m.outward_normal[i] = (f.left == k) ? f.normal : f.normal * (-1.0);
  }
  return m;
}

Patch node_patch(const Mesh& mesh, int n) {
  Patch p;
  p.node = n;
  p.elements = mesh.node_elements[n];
  std::vector<int> seen_spoke;
  for (int k : p.elements) {
    const auto& el = mesh.elements[k];
    const int ln = mesh.local_vertex(k, n);
    for (int i = 0; i < 3; ++i) {
      const int fi = el.facet[i];
      const Facet& f = mesh.facets[fi];
      if (i == ln) {
        // facet opposite the patch node: on the patch boundary, node excluded
        p.ext_facets_no_node.push_back(fi);
      } else if (f.interior()) {
        // spoke shared by two patch elements; record once
        if (std::find(seen_spoke.begin(), seen_spoke.end(), fi) == seen_spoke.end())
          seen_spoke.push_back(fi);
      } else if (f.label == BoundaryLabel::neumann) {
        p.neumann_facets.push_back(fi);
      }
    }
    if (el.kappa == 0.0)
      p.zero_kappa_elements.push_back(k);
    else
      p.positive_kappa_elements.push_back(k);
  }
  p.interior_facets = std::move(seen_spoke);
  std::sort(p.interior_facets.begin(), p.interior_facets.end());
  std::sort(p.ext_facets_no_node.begin(), p.ext_facets_no_node.end());
  std::sort(p.neumann_facets.begin(), p.neumann_facets.end());
  return p;
}

// ---------------------------------------------------------------------------
// Longest-edge bisection (Rivara). Works on a flat triangle soup with an edge
// registry; compatibility is restored by walking to the neighbour whenever the
// shared edge is not its longest one. Edge ids provide the deterministic tie
// break; initial ids coincide with the facet indices of the input mesh.
// ---------------------------------------------------------------------------

namespace {

struct RefineState {
  const Mesh* input;
  std::vector<Vec2> verts;
  struct Tri {
    std::array<int, 3> v;
    int region;
    double kappa;
    bool alive = true;
  };
  std::vector<Tri> tris;
  struct EdgeRec {
    int id = -1;
    int elem[2] = {-1, -1};
  };
  std::unordered_map<int64_t, EdgeRec> edges;
  std::unordered_map<int64_t, int> midpoint;
  std::map<int64_t, BoundaryLabel> labels;
  std::vector<std::array<int, 2>> parent_edge;
  int next_edge_id = 0;
  const KappaRule* kappa_rule = nullptr;
  const BoundaryProjector* boundary_midpoint = nullptr;

  void attach(int64_t key, int t) {
    EdgeRec& rec = edges[key];
    if (rec.id < 0) rec.id = next_edge_id++;
    if (rec.elem[0] < 0)
      rec.elem[0] = t;
    else if (rec.elem[1] < 0)
      rec.elem[1] = t;
    else
      throw NonConforming("edge incident to three elements during refinement");
  }

  void detach(int64_t key, int t) {
    EdgeRec& rec = edges.at(key);
    if (rec.elem[0] == t)
      rec.elem[0] = -1;
    else if (rec.elem[1] == t)
      rec.elem[1] = -1;
  }

  int neighbour(int64_t key, int t) const {
    const EdgeRec& rec = edges.at(key);
    if (rec.elem[0] == t) return rec.elem[1];
    if (rec.elem[1] == t) return rec.elem[0];
    return -1;
  }

  // Longest edge of triangle t; exact ties resolved by smaller edge id.
  int64_t longest_edge(int t) const {
    const auto& tri = tris[t];
    int64_t best = -1;
    double best_len = -1.0;
    int best_id = std::numeric_limits<int>::max();
    for (int i = 0; i < 3; ++i) {
      const int a = tri.v[i], b = tri.v[(i + 1) % 3];
      const double len = distance(verts[a], verts[b]);
      const int64_t key = edge_key(a, b);
      const int id = edges.at(key).id;
      if (len > best_len || (len == best_len && id < best_id)) {
        best_len = len;
        best_id = id;
        best = key;
      }
    }
    return best;
  }

  int midpoint_of(int a, int b) {
    const int64_t key = edge_key(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int m = static_cast<int>(verts.size());
    const auto lab = labels.find(key);
    if (lab != labels.end() && boundary_midpoint && *boundary_midpoint)
      verts.push_back((*boundary_midpoint)(verts[a], verts[b]));
    else
      verts.push_back((verts[a] + verts[b]) * 0.5);
    midpoint.emplace(key, m);
    parent_edge.push_back({std::min(a, b), std::max(a, b)});
    if (lab != labels.end()) {
      labels.emplace(edge_key(a, m), lab->second);
      labels.emplace(edge_key(m, b), lab->second);
      labels.erase(lab);
    }
    return m;
  }

  double child_kappa(const Tri& child, double parent_kappa) const {
    if (!kappa_rule || !(*kappa_rule)) return parent_kappa;
    const Vec2 c = (verts[child.v[0]] + verts[child.v[1]] + verts[child.v[2]]) / 3.0;
    return (*kappa_rule)(c);
  }

  // Splits triangle t across edge (a, b) at vertex m; children keep the
  // parent's orientation.
  void split(int t, int a, int b, int m) {
    Tri parent = tris[t];
    int i = -1;
    for (int j = 0; j < 3; ++j) {
      const int va = parent.v[j], vb = parent.v[(j + 1) % 3];
      if ((va == a && vb == b) || (va == b && vb == a)) {
        i = j;
        break;
      }
    }
    const int vi = parent.v[i], vj = parent.v[(i + 1) % 3], vk = parent.v[(i + 2) % 3];
    for (int j = 0; j < 3; ++j)
      detach(edge_key(parent.v[j], parent.v[(j + 1) % 3]), t);
    tris[t].alive = false;

    Tri c1{{vi, m, vk}, parent.region, parent.kappa};
    Tri c2{{m, vj, vk}, parent.region, parent.kappa};
    c1.kappa = child_kappa(c1, parent.kappa);
    c2.kappa = child_kappa(c2, parent.kappa);
    const int t1 = static_cast<int>(tris.size());
    tris.push_back(c1);
    const int t2 = static_cast<int>(tris.size());
    tris.push_back(c2);
    for (int j = 0; j < 3; ++j) attach(edge_key(c1.v[j], c1.v[(j + 1) % 3]), t1);
    for (int j = 0; j < 3; ++j) attach(edge_key(c2.v[j], c2.v[(j + 1) % 3]), t2);
  }

  void refine(int t0, int max_depth) {
    std::vector<int> stack{t0};
    while (!stack.empty()) {
      if (static_cast<int>(stack.size()) > max_depth)
        throw RefinementOverflow("bisection compatibility chain exceeded depth " +
                                 std::to_string(max_depth));
      const int t = stack.back();
      if (!tris[t].alive) {
        stack.pop_back();
        continue;
      }
      const int64_t e = longest_edge(t);
      const int s = neighbour(e, t);
      if (s >= 0 && longest_edge(s) != e) {
        stack.push_back(s);
        continue;
      }
      const int a = static_cast<int>(e >> 32);
      const int b = static_cast<int>(e & 0xffffffff);
      const int m = midpoint_of(a, b);
      split(t, a, b, m);
      if (s >= 0) split(s, a, b, m);
      stack.pop_back();
    }
  }
};

BisectResult bisect_impl(const Mesh& mesh, const std::vector<int>& marked,
                         const KappaRule& kappa, int max_depth,
                         const BoundaryProjector& boundary_midpoint) {
  RefineState st;
  st.input = &mesh;
  st.verts = mesh.vertices;
  st.kappa_rule = &kappa;
  st.boundary_midpoint = &boundary_midpoint;
  st.tris.resize(mesh.n_elements());
  for (int k = 0; k < mesh.n_elements(); ++k)
    st.tris[k] = {mesh.elements[k].v, mesh.elements[k].region, mesh.elements[k].kappa};
  // Seed edge ids with the facet order of the input mesh.
  st.next_edge_id = mesh.n_facets();
  for (int f = 0; f < mesh.n_facets(); ++f)
    st.edges[edge_key(mesh.facets[f].v[0], mesh.facets[f].v[1])].id = f;
  for (int k = 0; k < mesh.n_elements(); ++k)
    for (int j = 0; j < 3; ++j)
      st.attach(edge_key(mesh.elements[k].v[j], mesh.elements[k].v[(j + 1) % 3]), k);
  for (const Facet& f : mesh.facets)
    if (!f.interior()) st.labels.emplace(edge_key(f.v[0], f.v[1]), f.label);

  for (int t : marked) {
    if (t < 0 || t >= mesh.n_elements())
      throw Error("marked element index out of range");
    if (st.tris[t].alive) st.refine(t, max_depth);
  }

  MeshBuilder b;
  b.verts = std::move(st.verts);
  for (const auto& tri : st.tris) {
    if (!tri.alive) continue;
    b.tris.push_back({tri.v, tri.region});
    b.kappas.push_back(tri.kappa);
  }
  b.labels = std::move(st.labels);
  BisectResult out{b.finalize(true), std::move(st.parent_edge)};
  return out;
}

}  // namespace

Mesh bisect(const Mesh& mesh, const std::vector<int>& marked, const KappaRule& kappa,
            int max_depth, const BoundaryProjector& boundary_midpoint) {
  return bisect_impl(mesh, marked, kappa, max_depth, boundary_midpoint).mesh;
}

BisectResult bisect_tracked(const Mesh& mesh, const std::vector<int>& marked,
                            const KappaRule& kappa, int max_depth,
                            const BoundaryProjector& boundary_midpoint) {
  return bisect_impl(mesh, marked, kappa, max_depth, boundary_midpoint);
}

KappaConditionReport validate_kappa_condition(const Mesh& mesh, double c_threshold) {
  if (!(c_threshold > 0.0)) throw Error("kappa condition threshold must be > 0");
  KappaConditionReport rep;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const auto& el = mesh.elements[k];
    const double h = element_metrics(mesh, k).h;
    if (!(h * el.kappa > 1.0)) continue;
    bool violated = false;
    for (int vi : el.v) {
      for (int kp : mesh.node_elements[vi]) {
        const double kap2 = mesh.elements[kp].kappa;
        const double ratio = kap2 == 0.0 ? std::numeric_limits<double>::infinity()
                                         : el.kappa / kap2;
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (ratio > c_threshold) violated = true;
      }
    }
    if (violated) rep.violations.push_back(k);
  }
  return rep;
}

double min_angle(const Mesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& el : mesh.elements) {
    for (int i = 0; i < 3; ++i) {
      const Vec2 a = mesh.vertices[el.v[i]];
      const Vec2 b = mesh.vertices[el.v[(i + 1) % 3]];
      const Vec2 c = mesh.vertices[el.v[(i + 2) % 3]];
      const Vec2 u = b - a, w = c - a;
      const double ang = std::atan2(std::abs(cross(u, w)), dot(u, w));
      best = std::min(best, ang);
    }
  }
  return best;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[80];
  out << "vertices " << mesh.n_vertices() << "\n";
  for (const Vec2& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "%.16e %.16e\n", v.x, v.y);
    out << buf;
  }
  out << "triangles " << mesh.n_elements() << "\n";
  for (const auto& el : mesh.elements)
    out << el.v[0] << ' ' << el.v[1] << ' ' << el.v[2] << ' ' << el.region << "\n";
  int nb = 0;
  for (const auto& f : mesh.facets)
    if (!f.interior()) ++nb;
  out << "boundary " << nb << "\n";
  for (const auto& f : mesh.facets) {
    if (f.interior()) continue;
    out << f.v[0] << ' ' << f.v[1] << ' '
        << (f.label == BoundaryLabel::dirichlet ? "dirichlet" : "neumann") << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

Mesh read_mesh(const std::string& path, const KappaRule& kappa) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string word;
  auto expect = [&](const char* kw) {
    if (!(in >> word) || word != kw)
      throw IoError(path + ": expected '" + kw + "'");
  };
  int n = 0;
  expect("vertices");
  in >> n;
  std::vector<Vec2> verts(n);
  for (auto& v : verts)
    if (!(in >> v.x >> v.y)) throw IoError(path + ": bad vertex line");
  expect("triangles");
  in >> n;
  std::vector<TriangleSpec> tris(n);
  for (auto& t : tris)
    if (!(in >> t.v[0] >> t.v[1] >> t.v[2] >> t.region))
      throw IoError(path + ": bad triangle line");
  expect("boundary");
  in >> n;
  std::vector<BoundarySpec> bnd(n);
  for (auto& s : bnd) {
    if (!(in >> s.a >> s.b >> word)) throw IoError(path + ": bad boundary line");
    if (word == "dirichlet")
      s.label = BoundaryLabel::dirichlet;
    else if (word == "neumann")
      s.label = BoundaryLabel::neumann;
    else
      throw IoError(path + ": unknown boundary label '" + word + "'");
  }
  return build_mesh(verts, tris, bnd, kappa);
}

}  // namespace equiflux
