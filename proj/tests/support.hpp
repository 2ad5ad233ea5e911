// Shared test helpers: independent oracles (BFS rings, finite differences),
// deterministic random meshes, and scratch directories.
#pragma once
#include <filesystem>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "transformesh/mesh.hpp"
#include "transformesh/primitives.hpp"
#include "transformesh/tensor.hpp"

namespace tfm::testing {

// Scratch directory unique per test invocation, removed lazily by the OS.
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("tfm_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Hop-distance rings from `start`, ring 0 = {start}; the spiral oracle.
inline std::vector<std::vector<int>> bfs_rings(const Adjacency& adj, int start) {
  std::vector<int> dist(adj.neighbors.size(), -1);
  std::queue<int> q;
  dist[start] = 0;
  q.push(start);
  int max_d = 0;
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    for (int nb : adj.neighbors[v])
      if (dist[nb] < 0) {
        dist[nb] = dist[v] + 1;
        max_d = std::max(max_d, dist[nb]);
        q.push(nb);
      }
  }
  std::vector<std::vector<int>> rings(max_d + 1);
  for (size_t v = 0; v < dist.size(); ++v)
    if (dist[v] >= 0) rings[dist[v]].push_back(static_cast<int>(v));
  return rings;
}

inline TriangleMesh jittered_icosphere(int subdivisions, unsigned seed, double amount = 0.05) {
  TriangleMesh mesh = make_icosphere(subdivisions);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amount, amount);
  for (auto& v : mesh.vertices) v = {v.x + d(rng), v.y + d(rng), v.z + d(rng)};
  return mesh;
}

// Max relative error between analytic input gradients and central finite
// differences of the scalar produced by `forward` (which must rebuild the
// graph from the current input values on every call).
inline double fd_max_rel_error(const std::function<Tensor()>& forward, std::vector<Tensor> inputs,
                               double h = 1e-5) {
  Tensor loss = forward();
  for (auto& in : inputs) in.zero_grad();
  tfm::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) analytic.push_back(in.grad());

  double worst = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& vals = inputs[t].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = forward().item();
      vals[i] = keep - h;
      const double down = forward().item();
      vals[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1.0});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

inline std::vector<double> random_values(size_t n, unsigned seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

}  // namespace tfm::testing
