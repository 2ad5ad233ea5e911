// Quadric-error-metric edge contraction (Garland-Heckbert). Contractions are
// restricted to existing edges, ordered by quadric cost through a lazily
// invalidated heap, and rejected when they would break the surface (link
// condition, duplicate faces, face-normal flips). Rejected edges are retried
// after the next successful contraction, since legality can change.
#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/mesh.hpp"
#include "transformesh/sparse.hpp"

namespace tfm {

namespace detail {

// Symmetric 4x4 quadric, dense storage for clarity.
struct Quadric {
  double q[4][4] = {};

  void add_plane(const Vec3& n, double d) {
    const double p[4] = {n.x, n.y, n.z, d};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) q[i][j] += p[i] * p[j];
  }

  Quadric& operator+=(const Quadric& o) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) q[i][j] += o.q[i][j];
    return *this;
  }

  double evaluate(const Vec3& v) const {
    const double p[4] = {v.x, v.y, v.z, 1.0};
    double acc = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) acc += p[i] * q[i][j] * p[j];
    return acc;
  }

  // Minimizer of v^T Q v; false when the 3x3 system is near singular.
  bool optimal_point(Vec3& out) const {
    const double a00 = q[0][0], a01 = q[0][1], a02 = q[0][2];
    const double a11 = q[1][1], a12 = q[1][2], a22 = q[2][2];
    const double det = a00 * (a11 * a22 - a12 * a12) - a01 * (a01 * a22 - a12 * a02) +
                       a02 * (a01 * a12 - a11 * a02);
    if (std::abs(det) < 1e-12) return false;
    const double bx = -q[0][3], by = -q[1][3], bz = -q[2][3];
    // adjugate of the symmetric 3x3 block
    const double c00 = a11 * a22 - a12 * a12;
    const double c01 = a02 * a12 - a01 * a22;
    const double c02 = a01 * a12 - a02 * a11;
    const double c11 = a00 * a22 - a02 * a02;
    const double c12 = a01 * a02 - a00 * a12;
    const double c22 = a00 * a11 - a01 * a01;
    const double inv = 1.0 / det;
    out.x = inv * (c00 * bx + c01 * by + c02 * bz);
    out.y = inv * (c01 * bx + c11 * by + c12 * bz);
    out.z = inv * (c02 * bx + c12 * by + c22 * bz);
    return true;
  }
};

inline std::array<int, 3> sorted_face_key(std::array<int, 3> f) {
  std::sort(f.begin(), f.end());
  return f;
}

}  // namespace detail

struct QemResult {
  TriangleMesh coarse;
  SparseMatrix down;           // n_coarse x n_fine, uniform average per cluster
  std::vector<int> survivors;  // coarse index -> original vertex index
};

inline QemResult qem_decimate(const TriangleMesh& mesh, int target_vertex_count) {
  validate_mesh(mesh);
  const int n = mesh.n_vertices();
  if (target_vertex_count < 3 || target_vertex_count > n)
    throw ValidationError("decimation target " + std::to_string(target_vertex_count) +
                          " out of range [3," + std::to_string(n) + "]");

  std::vector<Vec3> pos = mesh.vertices;
  std::vector<detail::Quadric> quadric(n);
  for (const auto& tri : mesh.faces) {
    Vec3 nrm = face_normal(mesh, tri);
    double len = norm(nrm);
    if (len <= 0.0) continue;  // zero-area face contributes nothing
    nrm = nrm * (1.0 / len);
    double d = -dot(nrm, mesh.vertices[tri[0]]);
    for (int k = 0; k < 3; ++k) quadric[tri[k]].add_plane(nrm, d);
  }

  std::vector<std::array<int, 3>> faces = mesh.faces;
  std::vector<char> face_alive(faces.size(), 1);
  std::vector<std::vector<int>> incident(n);
  std::map<std::array<int, 3>, int> face_count;
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) incident[faces[f][k]].push_back(static_cast<int>(f));
    ++face_count[detail::sorted_face_key(faces[f])];
  }

  std::vector<std::set<int>> nbr(n);
  for (const auto& tri : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      nbr[tri[k]].insert(tri[(k + 1) % 3]);
      nbr[tri[(k + 1) % 3]].insert(tri[k]);
    }

  std::vector<int> version(n, 0);
  std::vector<char> alive(n, 1);
  std::vector<std::vector<int>> cluster(n);
  for (int i = 0; i < n; ++i) cluster[i] = {i};

  struct Entry {
    double cost;
    int a, b;  // a < b
    Vec3 point;
    int va, vb;
  };
  auto later = [](const Entry& x, const Entry& y) {
    // max-heap adapter: "later" means larger (cost, a, b)
    if (x.cost != y.cost) return x.cost > y.cost;
    if (x.a != y.a) return x.a > y.a;
    return x.b > y.b;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(later)> heap(later);

  auto edge_entry = [&](int a, int b) {
    detail::Quadric q = quadric[a];
    q += quadric[b];
    Vec3 v;
    if (!q.optimal_point(v)) {
      const Vec3 cands[3] = {pos[a], pos[b], (pos[a] + pos[b]) * 0.5};
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& c : cands) {
        double e = q.evaluate(c);
        if (e < best) {
          best = e;
          v = c;
        }
      }
    }
    return Entry{q.evaluate(v), a, b, v, version[a], version[b]};
  };

  for (int a = 0; a < n; ++a)
    for (int b : nbr[a])
      if (a < b) heap.push(edge_entry(a, b));

  auto contains = [](const std::array<int, 3>& f, int v) {
    return f[0] == v || f[1] == v || f[2] == v;
  };

  // Legality of contracting (a,b) to `point`.
  auto legal = [&](int a, int b, const Vec3& point) {
    std::set<int> opposite;
    std::vector<int> shared;
    for (int f : incident[a]) {
      if (!face_alive[f] || !contains(faces[f], b)) continue;
      shared.push_back(f);
      for (int k = 0; k < 3; ++k)
        if (faces[f][k] != a && faces[f][k] != b) opposite.insert(faces[f][k]);
    }
    if (shared.empty()) return false;

    std::set<int> common;
    std::set_intersection(nbr[a].begin(), nbr[a].end(), nbr[b].begin(), nbr[b].end(),
                          std::inserter(common, common.begin()));
    if (common != opposite) return false;  // link condition

    std::set<std::array<int, 3>> rewritten_keys;
    for (int v : {a, b}) {
      for (int f : incident[v]) {
        if (!face_alive[f] || contains(faces[f], v == a ? b : a)) continue;
        std::array<int, 3> tri = faces[f];
        Vec3 p[3], q[3];
        std::array<int, 3> new_tri = tri;
        for (int k = 0; k < 3; ++k) {
          p[k] = pos[tri[k]];
          q[k] = (tri[k] == a || tri[k] == b) ? point : pos[tri[k]];
          if (tri[k] == b) new_tri[k] = a;
        }
        Vec3 before = cross(p[1] - p[0], p[2] - p[0]);
        Vec3 after = cross(q[1] - q[0], q[2] - q[0]);
        if (dot(before, after) <= 0.0) return false;  // flip or collapse
        if (v == b) {
          auto key = detail::sorted_face_key(new_tri);
          if (face_count.count(key) || !rewritten_keys.insert(key).second) return false;
        }
      }
    }
    return true;
  };

  int n_alive = n;
  std::vector<std::pair<int, int>> blocked;

  while (n_alive > target_vertex_count) {
    if (heap.empty())
      throw DecimationStuckError("no legal contraction left at " + std::to_string(n_alive) +
                                 " vertices (target " + std::to_string(target_vertex_count) + ")");
    Entry e = heap.top();
    heap.pop();
    if (!alive[e.a] || !alive[e.b] || version[e.a] != e.va || version[e.b] != e.vb ||
        !nbr[e.a].count(e.b))
      continue;
    if (!legal(e.a, e.b, e.point)) {
      blocked.emplace_back(e.a, e.b);
      continue;
    }

    const int s = e.a, t = e.b;  // survivor keeps the smaller index
    pos[s] = e.point;
    quadric[s] += quadric[t];
    cluster[s].insert(cluster[s].end(), cluster[t].begin(), cluster[t].end());
    cluster[t].clear();

    for (int f : incident[t]) {
      if (!face_alive[f]) continue;
      auto old_key = detail::sorted_face_key(faces[f]);
      if (contains(faces[f], s)) {
        face_alive[f] = 0;
        if (--face_count[old_key] == 0) face_count.erase(old_key);
      } else {
        if (--face_count[old_key] == 0) face_count.erase(old_key);
        for (int k = 0; k < 3; ++k)
          if (faces[f][k] == t) faces[f][k] = s;
        ++face_count[detail::sorted_face_key(faces[f])];
        incident[s].push_back(f);
      }
    }
    incident[t].clear();

    std::vector<int> t_nbrs(nbr[t].begin(), nbr[t].end());
    for (int u : t_nbrs) {
      nbr[u].erase(t);
      if (u != s) {
        nbr[u].insert(s);
        nbr[s].insert(u);
      }
    }
    nbr[t].clear();
    nbr[s].erase(t);
    alive[t] = 0;
    --n_alive;
    ++version[s];
    ++version[t];

    for (int u : nbr[s]) heap.push(edge_entry(std::min(s, u), std::max(s, u)));
    for (const auto& [x, y] : blocked)
      if (alive[x] && alive[y] && nbr[x].count(y)) heap.push(edge_entry(x, y));
    blocked.clear();
  }

  QemResult result;
  std::vector<int> remap(n, -1);
  for (int v = 0; v < n; ++v) {
    if (!alive[v]) continue;
    remap[v] = static_cast<int>(result.survivors.size());
    result.survivors.push_back(v);
    result.coarse.vertices.push_back(pos[v]);
  }
  for (size_t f = 0; f < faces.size(); ++f) {
    if (!face_alive[f]) continue;
    result.coarse.faces.push_back({remap[faces[f][0]], remap[faces[f][1]], remap[faces[f][2]]});
  }
  validate_mesh(result.coarse);

  result.down.rows = static_cast<int>(result.survivors.size());
  result.down.cols = n;
  result.down.row_entries.resize(result.down.rows);
  for (int r = 0; r < result.down.rows; ++r) {
    auto members = cluster[result.survivors[r]];
    std::sort(members.begin(), members.end());
    const double w = 1.0 / static_cast<double>(members.size());
    for (int m : members) result.down.row_entries[r].emplace_back(m, w);
  }
  return result;
}

}  // namespace tfm
