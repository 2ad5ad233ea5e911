// Template decimation hierarchy: per level a mesh, its spiral table, the
// cluster-average down-sampling matrix and the barycentric up-sampling
// matrix back from the next coarser level. Built once per template,
// deterministic, cached in a single binary file.
#pragma once
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/mesh.hpp"
#include "transformesh/qem.hpp"
#include "transformesh/sparse.hpp"
#include "transformesh/spiral.hpp"

namespace tfm {

namespace detail {

// Barycentric coordinates of the closest point on triangle (a,b,c) to p,
// after Ericson's region walk; always inside the closed triangle.
inline Vec3 closest_point_bary(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }
  const double denom = va + vb + vc;
  if (denom <= 0.0) return {1, 0, 0};  // degenerate triangle, pick a corner
  const double v = vb / denom, w = vc / denom;
  return {1.0 - v - w, v, w};
}

}  // namespace detail

// For each fine vertex: barycentric weights of its closest point over all
// coarse triangles. Rows have at most three nonnegative entries summing to 1.
inline SparseMatrix barycentric_up(const TriangleMesh& fine, const TriangleMesh& coarse) {
  SparseMatrix up;
  up.rows = fine.n_vertices();
  up.cols = coarse.n_vertices();
  up.row_entries.resize(up.rows);
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const Vec3& p = fine.vertices[v];
    double best_d2 = std::numeric_limits<double>::infinity();
    std::array<int, 3> best_tri{};
    Vec3 best_bary;
    for (const auto& tri : coarse.faces) {
      Vec3 bary = detail::closest_point_bary(p, coarse.vertices[tri[0]], coarse.vertices[tri[1]],
                                             coarse.vertices[tri[2]]);
      Vec3 q = coarse.vertices[tri[0]] * bary.x + coarse.vertices[tri[1]] * bary.y +
               coarse.vertices[tri[2]] * bary.z;
      double d2 = dot(p - q, p - q);
      if (d2 < best_d2) {  // first triangle wins ties
        best_d2 = d2;
        best_tri = tri;
        best_bary = bary;
      }
    }
    double w[3] = {std::max(best_bary.x, 0.0), std::max(best_bary.y, 0.0),
                   std::max(best_bary.z, 0.0)};
    const double sum = w[0] + w[1] + w[2];
    auto& row = up.row_entries[v];
    for (int k = 0; k < 3; ++k)
      if (w[k] > 0.0) row.emplace_back(best_tri[k], w[k] / sum);
    std::sort(row.begin(), row.end());
  }
  return up;
}

struct HierarchyLevel {
  TriangleMesh mesh;
  SpiralTable spirals;
  SparseMatrix down;  // this level -> next coarser; empty on the last level
  SparseMatrix up;    // next coarser -> this level; empty on the last level

  bool operator==(const HierarchyLevel& o) const {
    return mesh == o.mesh && spirals == o.spirals && down == o.down && up == o.up;
  }
};

struct MeshHierarchy {
  std::vector<HierarchyLevel> levels;

  int n_levels() const { return static_cast<int>(levels.size()); }
  const TriangleMesh& template_mesh() const { return levels.front().mesh; }
  const TriangleMesh& coarsest_mesh() const { return levels.back().mesh; }

  bool operator==(const MeshHierarchy& o) const { return levels == o.levels; }
};

// Chains qem_decimate / barycentric_up over the reduction factors and
// attaches a spiral table per level. spiral_lengths has factors.size()+1
// entries, one per level.
inline MeshHierarchy build_hierarchy(const TriangleMesh& tmpl, const std::vector<int>& factors,
                                     const std::vector<int>& spiral_lengths) {
  validate_mesh(tmpl);
  if (!is_closed_manifold(tmpl)) throw NonManifoldError("hierarchy template must be closed");
  if (spiral_lengths.size() != factors.size() + 1)
    throw ValidationError("need one spiral length per level: " +
                          std::to_string(factors.size() + 1) + " levels, got " +
                          std::to_string(spiral_lengths.size()));
  for (int f : factors)
    if (f <= 1) throw ValidationError("reduction factors must be > 1");

  MeshHierarchy h;
  h.levels.push_back({tmpl, build_spiral_table(tmpl, spiral_lengths[0], 0), {}, {}});
  for (size_t k = 0; k < factors.size(); ++k) {
    const TriangleMesh& fine = h.levels.back().mesh;
    int target = fine.n_vertices() / factors[k];
    if (target < 4)
      throw ValidationError("level " + std::to_string(k + 1) + " target " +
                            std::to_string(target) + " too small");
    QemResult qem = qem_decimate(fine, target);
    if (!is_closed_manifold(qem.coarse))
      throw NonManifoldError("level " + std::to_string(k + 1) + " is not a closed manifold");
    h.levels.back().down = std::move(qem.down);
    h.levels.back().up = barycentric_up(fine, qem.coarse);
    TriangleMesh coarse = std::move(qem.coarse);
    SpiralTable spirals =
        build_spiral_table(coarse, spiral_lengths[k + 1], static_cast<int>(k + 1));
    h.levels.push_back({std::move(coarse), std::move(spirals), {}, {}});
  }
  return h;
}

namespace detail {

inline void write_sparse(std::ostream& out, const SparseMatrix& m) {
  std::int32_t dims[2] = {m.rows, m.cols};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::int64_t nnz = 0;
  for (const auto& row : m.row_entries) nnz += static_cast<std::int64_t>(row.size());
  out.write(reinterpret_cast<const char*>(&nnz), sizeof(nnz));
  for (std::int32_t r = 0; r < m.rows; ++r)
    for (const auto& [c, w] : m.row_entries[r]) {
      std::int32_t col = c;
      out.write(reinterpret_cast<const char*>(&r), sizeof(r));
      out.write(reinterpret_cast<const char*>(&col), sizeof(col));
      out.write(reinterpret_cast<const char*>(&w), sizeof(w));
    }
}

inline SparseMatrix read_sparse(std::istream& in) {
  SparseMatrix m;
  std::int32_t dims[2];
  std::int64_t nnz;
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)) ||
      !in.read(reinterpret_cast<char*>(&nnz), sizeof(nnz)))
    throw ParseError("hierarchy: truncated sparse header");
  m.rows = dims[0];
  m.cols = dims[1];
  m.row_entries.resize(m.rows);
  for (std::int64_t i = 0; i < nnz; ++i) {
    std::int32_t r, c;
    double w;
    if (!in.read(reinterpret_cast<char*>(&r), sizeof(r)) ||
        !in.read(reinterpret_cast<char*>(&c), sizeof(c)) ||
        !in.read(reinterpret_cast<char*>(&w), sizeof(w)))
      throw ParseError("hierarchy: truncated sparse body");
    m.row_entries[r].emplace_back(c, w);
  }
  return m;
}

inline void write_mesh_block(std::ostream& out, const TriangleMesh& mesh) {
  std::int32_t counts[2] = {mesh.n_vertices(), mesh.n_faces()};
  out.write(reinterpret_cast<const char*>(counts), sizeof(counts));
  for (const auto& v : mesh.vertices) {
    double xyz[3] = {v.x, v.y, v.z};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const auto& f : mesh.faces) {
    std::int32_t tri[3] = {f[0], f[1], f[2]};
    out.write(reinterpret_cast<const char*>(tri), sizeof(tri));
  }
}

inline TriangleMesh read_mesh_block(std::istream& in) {
  std::int32_t counts[2];
  if (!in.read(reinterpret_cast<char*>(counts), sizeof(counts)))
    throw ParseError("hierarchy: truncated mesh header");
  TriangleMesh mesh;
  mesh.vertices.resize(counts[0]);
  mesh.faces.resize(counts[1]);
  for (auto& v : mesh.vertices) {
    double xyz[3];
    if (!in.read(reinterpret_cast<char*>(xyz), sizeof(xyz)))
      throw ParseError("hierarchy: truncated vertices");
    v = {xyz[0], xyz[1], xyz[2]};
  }
  for (auto& f : mesh.faces) {
    std::int32_t tri[3];
    if (!in.read(reinterpret_cast<char*>(tri), sizeof(tri)))
      throw ParseError("hierarchy: truncated faces");
    f = {tri[0], tri[1], tri[2]};
  }
  return mesh;
}

}  // namespace detail

inline void save_hierarchy(const MeshHierarchy& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write("TFMHIER1", 8);
  std::int32_t n_levels = h.n_levels();
  out.write(reinterpret_cast<const char*>(&n_levels), sizeof(n_levels));
  for (const auto& level : h.levels) {
    detail::write_mesh_block(out, level.mesh);
    save_spiral_table(level.spirals, out);
    std::uint8_t has_down = level.down.empty() ? 0 : 1;
    out.write(reinterpret_cast<const char*>(&has_down), 1);
    if (has_down) {
      detail::write_sparse(out, level.down);
      detail::write_sparse(out, level.up);
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline MeshHierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "TFMHIER1")
    throw ParseError("hierarchy: bad magic");
  std::int32_t n_levels;
  if (!in.read(reinterpret_cast<char*>(&n_levels), sizeof(n_levels)))
    throw ParseError("hierarchy: truncated header");
  MeshHierarchy h;
  for (std::int32_t k = 0; k < n_levels; ++k) {
    HierarchyLevel level;
    level.mesh = detail::read_mesh_block(in);
    level.spirals = load_spiral_table(in);
    std::uint8_t has_down;
    if (!in.read(reinterpret_cast<char*>(&has_down), 1))
      throw ParseError("hierarchy: truncated level");
    if (has_down) {
      level.down = detail::read_sparse(in);
      level.up = detail::read_sparse(in);
    }
    h.levels.push_back(std::move(level));
  }
  return h;
}

}  // namespace tfm
