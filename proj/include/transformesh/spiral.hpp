// Spiral serialization: for every vertex, a fixed-length outward-winding
// sequence of neighbors (center, ring 1 CCW, ring 2 CCW, ...). Tables are
// built once per template level and reused for every corresponded sample.
#pragma once
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/mesh.hpp"

namespace tfm {

// Padded slots when a spiral exhausts the mesh before reaching its length.
constexpr int kSpiralFiller = -1;

struct SpiralTable {
  int level = 0;
  int length = 0;       // slots per spiral
  int n_vertices = 0;   // rows
  std::vector<std::int32_t> indices;  // row-major n_vertices x length

  int at(int row, int slot) const { return indices[static_cast<size_t>(row) * length + slot]; }

  bool operator==(const SpiralTable& o) const {
    return level == o.level && length == o.length && n_vertices == o.n_vertices &&
           indices == o.indices;
  }
};

namespace detail {

// Position of `anchor` in `ring`, then the first vertex after it (cyclically)
// satisfying `pred`; -1 when none does.
template <typename Pred>
inline int next_ccw_after(const std::vector<int>& ring, int anchor, Pred pred) {
  int pos = -1;
  for (size_t i = 0; i < ring.size(); ++i)
    if (ring[i] == anchor) {
      pos = static_cast<int>(i);
      break;
    }
  if (pos < 0) return -1;
  for (size_t step = 1; step <= ring.size(); ++step) {
    int cand = ring[(pos + step) % ring.size()];
    if (pred(cand)) return cand;
  }
  return -1;
}

}  // namespace detail

// One spiral row. Rings are enumerated by hop distance; each ring is walked
// CCW starting next to the previous ring's endpoint, so consecutive entries
// stay adjacent in the mesh graph. Exhausted components pad with the filler.
inline std::vector<int> build_spiral(const TriangleMesh& mesh, const Adjacency& adj, int vertex,
                                     int length,
                                     const std::vector<std::vector<int>>* ring_cache = nullptr) {
  auto ccw_ring = [&](int v) -> std::vector<int> {
    if (ring_cache) return (*ring_cache)[v];
    return one_ring_ccw(mesh, adj, v);
  };

  std::vector<int> seq{vertex};
  if (static_cast<int>(seq.size()) >= length) {
    seq.resize(length, kSpiralFiller);
    return seq;
  }

  std::vector<char> visited(mesh.n_vertices(), 0);
  visited[vertex] = 1;
  std::vector<int> ring = ccw_ring(vertex);  // ring 1, CCW from smallest neighbor
  for (int v : ring) visited[v] = 1;
  seq.insert(seq.end(), ring.begin(), ring.end());

  while (static_cast<int>(seq.size()) < length) {
    // candidate set: unvisited neighbors of the current ring = next BFS ring
    std::set<int> next_set;
    for (int v : ring)
      for (int nb : adj.neighbors[v])
        if (!visited[nb]) next_set.insert(nb);
    if (next_set.empty()) break;

    std::vector<int> next_ring;
    auto unused = [&](int v) { return next_set.count(v) && !visited[v]; };

    // start next to the previous ring's endpoint, earliest CCW after the
    // vertex we arrived from
    int u = ring.back();
    int anchor = ring.size() >= 2 ? ring[ring.size() - 2] : seq[seq.size() - ring.size() - 1];
    int cur = detail::next_ccw_after(ccw_ring(u), anchor, unused);
    int came_from = u;
    while (static_cast<int>(next_ring.size()) < static_cast<int>(next_set.size())) {
      if (cur < 0) {
        // splice gap: restart from the earliest spiral vertex that still has
        // an unused candidate, taking its smallest-index one
        for (int s : seq) {
          int best = -1;
          for (int nb : adj.neighbors[s])
            if (unused(nb) && (best < 0 || nb < best)) best = nb;
          if (best >= 0) {
            cur = best;
            came_from = s;
            break;
          }
        }
        if (cur < 0) break;  // candidates unreachable (cannot happen for BFS rings)
      }
      next_ring.push_back(cur);
      visited[cur] = 1;
      seq.push_back(cur);
      int nxt = detail::next_ccw_after(ccw_ring(cur), came_from, unused);
      came_from = cur;
      cur = nxt;
    }
    ring = std::move(next_ring);
    if (ring.empty()) break;
  }

  seq.resize(length, kSpiralFiller);
  return seq;
}

inline SpiralTable build_spiral_table(const TriangleMesh& mesh, int length, int level = 0) {
  if (length < 1) throw ValidationError("spiral length must be >= 1");
  Adjacency adj = derive_adjacency(mesh);
  std::vector<std::vector<int>> rings(mesh.n_vertices());
  for (int v = 0; v < mesh.n_vertices(); ++v) rings[v] = one_ring_ccw(mesh, adj, v);

  SpiralTable table;
  table.level = level;
  table.length = length;
  table.n_vertices = mesh.n_vertices();
  table.indices.resize(static_cast<size_t>(mesh.n_vertices()) * length);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    std::vector<int> row = build_spiral(mesh, adj, v, length, &rings);
    for (int s = 0; s < length; ++s)
      table.indices[static_cast<size_t>(v) * length + s] = row[s];
  }
  return table;
}

inline void save_spiral_table(const SpiralTable& table, std::ostream& out) {
  out.write("TFMSPIR1", 8);
  std::int32_t header[3] = {table.level, table.n_vertices, table.length};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(table.indices.data()),
            static_cast<std::streamsize>(table.indices.size() * sizeof(std::int32_t)));
}

inline SpiralTable load_spiral_table(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "TFMSPIR1")
    throw ParseError("spiral table: bad magic");
  std::int32_t header[3];
  if (!in.read(reinterpret_cast<char*>(header), sizeof(header)))
    throw ParseError("spiral table: truncated header");
  SpiralTable table;
  table.level = header[0];
  table.n_vertices = header[1];
  table.length = header[2];
  table.indices.resize(static_cast<size_t>(table.n_vertices) * table.length);
  if (!in.read(reinterpret_cast<char*>(table.indices.data()),
               static_cast<std::streamsize>(table.indices.size() * sizeof(std::int32_t))))
    throw ParseError("spiral table: truncated body");
  return table;
}

inline void save_spiral_table(const SpiralTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_spiral_table(table, out);
}

inline SpiralTable load_spiral_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_spiral_table(in);
}

}  // namespace tfm
