#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "transformesh/mesh.hpp"
#include "transformesh/mesh_io.hpp"
#include "transformesh/primitives.hpp"

using namespace tfm;
namespace tt = tfm::testing;

TEST(Validate, RejectsBadMeshes) {
  TriangleMesh out_of_range{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 3}}};
  EXPECT_THROW(validate_mesh(out_of_range), ValidationError);

  TriangleMesh degenerate{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 1}}};
  EXPECT_THROW(validate_mesh(degenerate), ValidationError);

  TriangleMesh unreferenced{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}}, {{0, 1, 2}}};
  EXPECT_THROW(validate_mesh(unreferenced), ValidationError);

  // same directed edge twice = inconsistent winding
  TriangleMesh bad_orient{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 1, 2}, {0, 1, 3}}};
  EXPECT_THROW(validate_mesh(bad_orient), ValidationError);

  EXPECT_NO_THROW(validate_mesh(make_tetrahedron()));
  EXPECT_NO_THROW(validate_mesh(make_icosphere(1)));
  EXPECT_NO_THROW(validate_mesh(make_grid(4, 4)));
}

TEST(Primitives, OrientationIsOutward) {
  for (const auto& mesh : {make_tetrahedron(), make_octahedron(), make_icosphere(2)}) {
    EXPECT_TRUE(is_closed_manifold(mesh));
    EXPECT_EQ(euler_characteristic(mesh), 2);
    for (const auto& tri : mesh.faces) {
      Vec3 centroid = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) *
                      (1.0 / 3.0);
      EXPECT_GT(dot(face_normal(mesh, tri), centroid), 0.0);
    }
  }
}

TEST(ObjIo, SingleTriangle) {
  auto dir = tt::scratch_dir("obj_tri");
  tt::write_file(dir + "/tri.obj", "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  TriangleMesh mesh = load_mesh(dir + "/tri.obj", MeshFormat::Obj);
  EXPECT_EQ(mesh.n_vertices(), 3);
  EXPECT_EQ(mesh.n_faces(), 1);
  EXPECT_EQ(mesh.faces[0], (std::array<int, 3>{0, 1, 2}));
}

TEST(ObjIo, ZeroIndexIsParseError) {
  auto dir = tt::scratch_dir("obj_zero");
  tt::write_file(dir + "/bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  EXPECT_THROW(load_mesh(dir + "/bad.obj", MeshFormat::Obj), ParseError);
}

TEST(ObjIo, QuadIsParseError) {
  auto dir = tt::scratch_dir("obj_quad");
  tt::write_file(dir + "/quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  EXPECT_THROW(load_mesh(dir + "/quad.obj", MeshFormat::Obj), ParseError);
}

TEST(MeshIo, RoundTripAllFormats) {
  TriangleMesh original = tt::jittered_icosphere(1, 7);
  auto dir = tt::scratch_dir("roundtrip");
  for (MeshFormat fmt : {MeshFormat::Obj, MeshFormat::PlyAscii, MeshFormat::PlyBinary}) {
    std::string path = dir + "/mesh" + (fmt == MeshFormat::Obj ? ".obj" : ".ply");
    save_mesh(original, path, fmt);
    TriangleMesh loaded = load_mesh(path, fmt);
    ASSERT_EQ(loaded.faces, original.faces);
    ASSERT_EQ(loaded.n_vertices(), original.n_vertices());
    double max_diff = 0.0;
    for (int v = 0; v < loaded.n_vertices(); ++v) {
      Vec3 d = loaded.vertices[v] - original.vertices[v];
      max_diff = std::max({max_diff, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
    }
    EXPECT_LT(max_diff, 1e-7);
  }
}

TEST(MeshIo, RoundTripFuzz) {
  auto dir = tt::scratch_dir("roundtrip_fuzz");
  for (unsigned seed = 0; seed < 6; ++seed) {
    TriangleMesh original =
        seed % 2 ? tt::jittered_icosphere(seed % 3, 100 + seed) : make_grid(2 + seed, 3);
    if (seed % 2 == 0) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> d(-0.2, 0.2);
      for (auto& v : original.vertices) v.z += d(rng);
    }
    for (MeshFormat fmt : {MeshFormat::Obj, MeshFormat::PlyAscii, MeshFormat::PlyBinary}) {
      std::string path = dir + "/m" + std::to_string(seed) + (fmt == MeshFormat::Obj ? ".obj" : ".ply");
      save_mesh(original, path, fmt);
      TriangleMesh loaded = load_mesh(path, fmt);
      ASSERT_EQ(loaded.faces, original.faces);
      for (int v = 0; v < loaded.n_vertices(); ++v) {
        Vec3 d = loaded.vertices[v] - original.vertices[v];
        ASSERT_LT(std::max({std::abs(d.x), std::abs(d.y), std::abs(d.z)}), 1e-7);
      }
    }
  }
}

TEST(MeshIo, VertexColors) {
  TriangleMesh mesh = make_tetrahedron();
  auto dir = tt::scratch_dir("colors");
  VertexColors colors(mesh.n_vertices(), {10, 200, 30});

  VertexColors short_colors(mesh.n_vertices() - 1, {1, 2, 3});
  EXPECT_THROW(save_mesh(mesh, dir + "/bad.ply", MeshFormat::PlyBinary, short_colors),
               ValidationError);

  save_mesh(mesh, dir + "/colored.ply", MeshFormat::PlyBinary, colors, {"error_min 0 error_max 1"});
  TriangleMesh loaded = load_mesh(dir + "/colored.ply", MeshFormat::PlyBinary);
  EXPECT_EQ(loaded.faces, mesh.faces);

  save_mesh(mesh, dir + "/plain.ply", MeshFormat::PlyAscii);
  EXPECT_NO_THROW(load_mesh(dir + "/plain.ply", MeshFormat::PlyAscii));
}

TEST(Adjacency, SmallMeshDegrees) {
  TriangleMesh tri{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}};
  Adjacency adj = derive_adjacency(tri);
  for (int v = 0; v < 3; ++v) EXPECT_EQ(adj.degree(v), 2);

  Adjacency tet = derive_adjacency(make_tetrahedron());
  for (int v = 0; v < 4; ++v) EXPECT_EQ(tet.degree(v), 3);
}

TEST(Adjacency, IcosphereDegreeCensus) {
  TriangleMesh mesh = make_icosphere(1);
  Adjacency adj = derive_adjacency(mesh);
  int deg5 = 0, deg6 = 0;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (adj.degree(v) == 5)
      ++deg5;
    else if (adj.degree(v) == 6)
      ++deg6;
    else
      FAIL() << "unexpected degree " << adj.degree(v);
  }
  EXPECT_EQ(deg5, 12);
  EXPECT_EQ(deg6, mesh.n_vertices() - 12);
}

TEST(Adjacency, SymmetricAndMatchesBruteForce) {
  for (const auto& mesh : {make_octahedron(), tt::jittered_icosphere(1, 3)}) {
    Adjacency adj = derive_adjacency(mesh);
    std::set<std::pair<int, int>> brute;
    for (const auto& tri : mesh.faces)
      for (int k = 0; k < 3; ++k) {
        int a = tri[k], b = tri[(k + 1) % 3];
        brute.insert({std::min(a, b), std::max(a, b)});
      }
    std::set<std::pair<int, int>> derived(adj.edges.begin(), adj.edges.end());
    EXPECT_EQ(derived, brute);
    for (int v = 0; v < mesh.n_vertices(); ++v)
      for (int nb : adj.neighbors[v])
        EXPECT_TRUE(std::binary_search(adj.neighbors[nb].begin(), adj.neighbors[nb].end(), v));
  }
}

TEST(OneRing, TetrahedronWinding) {
  TriangleMesh mesh = make_tetrahedron();
  Adjacency adj = derive_adjacency(mesh);
  // faces at vertex 0: (0,1,2),(0,2,3),(0,3,1) give successors 1->2->3->1
  EXPECT_EQ(one_ring_ccw(mesh, adj, 0), (std::vector<int>{1, 2, 3}));
}

TEST(OneRing, ReversedWindingReversesCycle) {
  TriangleMesh mesh = make_tetrahedron();
  TriangleMesh reversed = mesh;
  for (auto& f : reversed.faces) std::swap(f[1], f[2]);
  Adjacency adj = derive_adjacency(mesh);
  Adjacency radj = derive_adjacency(reversed);
  std::vector<int> fwd = one_ring_ccw(mesh, adj, 0);
  std::vector<int> bwd = one_ring_ccw(reversed, radj, 0);
  // same start (smallest index), opposite direction
  std::vector<int> expect{fwd[0]};
  for (size_t i = fwd.size() - 1; i >= 1; --i) expect.push_back(fwd[i]);
  EXPECT_EQ(bwd, expect);
}

TEST(OneRing, BoundaryVertexRejected) {
  TriangleMesh grid = make_grid(3, 3);
  Adjacency adj = derive_adjacency(grid);
  EXPECT_THROW(one_ring_ccw(grid, adj, 0), NonManifoldError);
}

TEST(OneRing, IcosphereRingLengthEqualsDegree) {
  TriangleMesh mesh = make_icosphere(1);
  Adjacency adj = derive_adjacency(mesh);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    std::vector<int> ring = one_ring_ccw(mesh, adj, v);
    EXPECT_EQ(static_cast<int>(ring.size()), adj.degree(v));
    std::set<int> ring_set(ring.begin(), ring.end());
    EXPECT_EQ(ring_set, std::set<int>(adj.neighbors[v].begin(), adj.neighbors[v].end()));
    // consecutive ring members share a face with v, so they are adjacent
    for (size_t i = 0; i < ring.size(); ++i) {
      int a = ring[i], b = ring[(i + 1) % ring.size()];
      EXPECT_TRUE(std::binary_search(adj.neighbors[a].begin(), adj.neighbors[a].end(), b));
    }
  }
}
