// Indexed triangle mesh with the validation and traversal primitives the rest
// of the library relies on. Meshes are immutable after construction; all
// functions here are pure.
//
// Conventions:
// - Faces are counter-clockwise when seen from outside.
// - 0-based indices in memory (file formats convert in the I/O layer).
// - Closed 2-manifolds are the primary target; open meshes pass basic
//   validation but boundary vertices are rejected by one_ring_ccw.
#pragma once
#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/vec3.hpp"

namespace tfm {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_faces() const { return static_cast<int>(faces.size()); }

  bool operator==(const TriangleMesh& o) const {
    return vertices == o.vertices && faces == o.faces;
  }
};

// Tag tying a mesh to the fixed template every corresponded sample must match.
struct VertexCorrespondence {
  std::string template_id;
  int n_vertices = 0;
};

// Throws ValidationError on out-of-range indices, degenerate faces,
// unreferenced vertices, or a directed edge shared by two faces (inconsistent
// orientation / non-manifold fan).
inline void validate_mesh(const TriangleMesh& mesh) {
  const int n = mesh.n_vertices();
  if (mesh.faces.empty()) throw ValidationError("mesh has no faces");
  std::vector<char> referenced(n, 0);
  std::set<std::pair<int, int>> directed;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= n)
        throw ValidationError("face " + std::to_string(f) + " index " + std::to_string(tri[k]) +
                              " out of range [0," + std::to_string(n) + ")");
      referenced[tri[k]] = 1;
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw ValidationError("degenerate face " + std::to_string(f));
    for (int k = 0; k < 3; ++k) {
      auto e = std::make_pair(tri[k], tri[(k + 1) % 3]);
      if (!directed.insert(e).second)
        throw ValidationError("directed edge " + std::to_string(e.first) + "->" +
                              std::to_string(e.second) + " appears twice");
    }
  }
  for (int v = 0; v < n; ++v)
    if (!referenced[v]) throw ValidationError("vertex " + std::to_string(v) + " unreferenced");
}

// Per-vertex sorted neighbor lists plus the undirected edge set.
struct Adjacency {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::pair<int, int>> edges;  // (a,b) with a < b, sorted

  int degree(int v) const { return static_cast<int>(neighbors[v].size()); }
};

inline Adjacency derive_adjacency(const TriangleMesh& mesh) {
  Adjacency adj;
  adj.neighbors.assign(mesh.n_vertices(), {});
  std::set<std::pair<int, int>> edge_set;
  for (const auto& tri : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      edge_set.insert({std::min(a, b), std::max(a, b)});
    }
  }
  for (const auto& [a, b] : edge_set) {
    adj.neighbors[a].push_back(b);
    adj.neighbors[b].push_back(a);
  }
  for (auto& nb : adj.neighbors) std::sort(nb.begin(), nb.end());
  adj.edges.assign(edge_set.begin(), edge_set.end());
  return adj;
}

// Neighbors of `vertex` ordered counter-clockwise following face orientation.
// Starts at the smallest-index neighbor so the cycle is reproducible.
// Throws NonManifoldError if the incident faces do not close into one cycle
// (boundary vertex, fan, or duplicated wedge).
inline std::vector<int> one_ring_ccw(const TriangleMesh& mesh, const Adjacency& adj, int vertex) {
  // Face (v, x, y) contributes succ[x] = y; walking succ enumerates the ring CCW.
  std::map<int, int> succ;
  for (const auto& tri : mesh.faces) {
    int x = -1, y = -1;
    if (tri[0] == vertex) {
      x = tri[1];
      y = tri[2];
    } else if (tri[1] == vertex) {
      x = tri[2];
      y = tri[0];
    } else if (tri[2] == vertex) {
      x = tri[0];
      y = tri[1];
    } else {
      continue;
    }
    if (!succ.emplace(x, y).second)
      throw NonManifoldError("vertex " + std::to_string(vertex) + " has a duplicated wedge");
  }
  const auto& nbrs = adj.neighbors[vertex];
  if (nbrs.empty()) throw NonManifoldError("vertex " + std::to_string(vertex) + " isolated");
  int start = nbrs.front();  // smallest index, lists are sorted
  std::vector<int> ring;
  int cur = start;
  do {
    ring.push_back(cur);
    auto it = succ.find(cur);
    if (it == succ.end())
      throw NonManifoldError("vertex " + std::to_string(vertex) + " ring does not close");
    cur = it->second;
    if (ring.size() > succ.size())
      throw NonManifoldError("vertex " + std::to_string(vertex) + " ring is not a simple cycle");
  } while (cur != start);
  if (ring.size() != nbrs.size())
    throw NonManifoldError("vertex " + std::to_string(vertex) + " ring misses neighbors");
  return ring;
}

// Every undirected edge must have exactly two oppositely wound incident faces
// and every vertex a single closed ring.
inline bool is_closed_manifold(const TriangleMesh& mesh) {
  std::set<std::pair<int, int>> directed;
  for (const auto& tri : mesh.faces)
    for (int k = 0; k < 3; ++k)
      if (!directed.insert({tri[k], tri[(k + 1) % 3]}).second) return false;
  for (const auto& [a, b] : directed)
    if (!directed.count({b, a})) return false;
  Adjacency adj = derive_adjacency(mesh);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    try {
      one_ring_ccw(mesh, adj, v);
    } catch (const NonManifoldError&) {
      return false;
    }
  }
  return true;
}

inline int euler_characteristic(const TriangleMesh& mesh) {
  Adjacency adj = derive_adjacency(mesh);
  return mesh.n_vertices() - static_cast<int>(adj.edges.size()) + mesh.n_faces();
}

inline double mean_edge_length(const TriangleMesh& mesh) {
  Adjacency adj = derive_adjacency(mesh);
  double total = 0.0;
  for (const auto& [a, b] : adj.edges) total += norm(mesh.vertices[a] - mesh.vertices[b]);
  return adj.edges.empty() ? 0.0 : total / static_cast<double>(adj.edges.size());
}

inline Vec3 face_normal(const TriangleMesh& mesh, const std::array<int, 3>& tri) {
  return cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]],
               mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
}

// Area-weighted outward vertex normals (unnormalized face normals summed).
inline std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> normals(mesh.n_vertices());
  for (const auto& tri : mesh.faces) {
    Vec3 n = face_normal(mesh, tri);
    for (int k = 0; k < 3; ++k) normals[tri[k]] += n;
  }
  for (auto& n : normals) n = normalized(n);
  return normals;
}

}  // namespace tfm
