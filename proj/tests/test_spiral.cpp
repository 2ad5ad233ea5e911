#include <gtest/gtest.h>

#include <set>

#include "support.hpp"
#include "transformesh/primitives.hpp"
#include "transformesh/spiral.hpp"

using namespace tfm;
namespace tt = tfm::testing;

TEST(Spiral, LengthOneIsCenter) {
  TriangleMesh mesh = make_icosphere(1);
  SpiralTable table = build_spiral_table(mesh, 1);
  for (int v = 0; v < mesh.n_vertices(); ++v) EXPECT_EQ(table.at(v, 0), v);
}

TEST(Spiral, TetrahedronRows) {
  TriangleMesh mesh = make_tetrahedron();
  Adjacency adj = derive_adjacency(mesh);
  // one ring of vertex 0 winds 1,2,3 (see mesh tests)
  EXPECT_EQ(build_spiral(mesh, adj, 0, 4), (std::vector<int>{0, 1, 2, 3}));
  // exhaustion pads with the filler
  EXPECT_EQ(build_spiral(mesh, adj, 0, 5), (std::vector<int>{0, 1, 2, 3, kSpiralFiller}));
}

TEST(Spiral, TableIsDeterministic) {
  TriangleMesh mesh = make_icosphere(2);
  SpiralTable a = build_spiral_table(mesh, 9);
  SpiralTable b = build_spiral_table(mesh, 9);
  EXPECT_EQ(a, b);
}

TEST(Spiral, IcosphereNoFillerAtNine) {
  TriangleMesh mesh = make_icosphere(1);
  SpiralTable table = build_spiral_table(mesh, 9);
  for (size_t i = 0; i < table.indices.size(); ++i) EXPECT_NE(table.indices[i], kSpiralFiller);
}

TEST(Spiral, MatchesBfsRingOracle) {
  for (const auto& [mesh, length] :
       std::vector<std::pair<TriangleMesh, int>>{{make_tetrahedron(), 6},
                                                 {make_octahedron(), 7},
                                                 {make_icosphere(0), 12},
                                                 {make_icosphere(1), 16},
                                                 {make_icosphere(2), 20}}) {
    ASSERT_LE(mesh.n_vertices(), 200);
    Adjacency adj = derive_adjacency(mesh);
    SpiralTable table = build_spiral_table(mesh, length);
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      auto rings = tt::bfs_rings(adj, v);
      std::vector<int> depth(mesh.n_vertices(), -1);
      size_t ball = 0;
      for (size_t r = 0; r < rings.size(); ++r) {
        ball += rings[r].size();
        for (int u : rings[r]) depth[u] = static_cast<int>(r);
      }

      EXPECT_EQ(table.at(v, 0), v);
      std::set<int> got;
      int last_depth = 0;
      for (int s = 0; s < length; ++s) {
        int entry = table.at(v, s);
        if (entry == kSpiralFiller) continue;
        ASSERT_GE(depth[entry], 0) << "vertex " << v;       // reachable
        EXPECT_GE(depth[entry], last_depth) << "vertex " << v;  // rings in order
        last_depth = depth[entry];
        EXPECT_TRUE(got.insert(entry).second) << "vertex " << v;  // distinct entries
      }
      // non-filler count: full ball when it fits, else exactly `length`
      EXPECT_EQ(got.size(), std::min<size_t>(ball, length)) << "vertex " << v;
      // every ring strictly inside the cut depth is fully covered
      for (int r = 0; r < last_depth; ++r)
        for (int u : rings[r]) EXPECT_TRUE(got.count(u)) << "vertex " << v << " ring " << r;
    }
  }
}

TEST(Spiral, SameRingNeighborsAreAdjacent) {
  TriangleMesh mesh = make_icosphere(2);
  Adjacency adj = derive_adjacency(mesh);
  SpiralTable table = build_spiral_table(mesh, 16);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    auto rings = tt::bfs_rings(adj, v);
    std::vector<int> depth(mesh.n_vertices(), -1);
    for (size_t r = 0; r < rings.size(); ++r)
      for (int u : rings[r]) depth[u] = static_cast<int>(r);
    for (int s = 0; s + 1 < table.length; ++s) {
      int a = table.at(v, s), b = table.at(v, s + 1);
      if (a < 0 || b < 0) continue;
      if (depth[a] == depth[b] && depth[a] >= 1)
        EXPECT_TRUE(std::binary_search(adj.neighbors[a].begin(), adj.neighbors[a].end(), b))
            << "vertex " << v << " slot " << s;
    }
  }
}

TEST(Spiral, SidecarRoundTrip) {
  auto dir = tt::scratch_dir("spiral_io");
  TriangleMesh mesh = make_icosphere(1);
  SpiralTable table = build_spiral_table(mesh, 9, 2);
  save_spiral_table(table, dir + "/a.spiral");
  save_spiral_table(table, dir + "/b.spiral");
  EXPECT_EQ(tt::read_file(dir + "/a.spiral"), tt::read_file(dir + "/b.spiral"));
  SpiralTable loaded = load_spiral_table(dir + "/a.spiral");
  EXPECT_EQ(loaded, table);
  EXPECT_EQ(loaded.level, 2);
}

TEST(Spiral, RejectsBadLength) {
  EXPECT_THROW(build_spiral_table(make_tetrahedron(), 0), ValidationError);
}
