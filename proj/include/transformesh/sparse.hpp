// Row-compressed sparse matrix for the fixed pool / unpool transforms.
// Structure is fixed at build time; only dense features flow through it.
#pragma once
#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "transformesh/errors.hpp"

namespace tfm {

struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<std::pair<int, double>>> row_entries;  // (col, weight), col-sorted

  static SparseMatrix identity(int n) {
    SparseMatrix m;
    m.rows = m.cols = n;
    m.row_entries.resize(n);
    for (int i = 0; i < n; ++i) m.row_entries[i] = {{i, 1.0}};
    return m;
  }

  bool empty() const { return rows == 0 && cols == 0; }

  SparseMatrix transposed() const {
    SparseMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_entries.resize(cols);
    for (int r = 0; r < rows; ++r)
      for (const auto& [c, w] : row_entries[r]) t.row_entries[c].emplace_back(r, w);
    return t;  // already col-sorted because r is ascending
  }

  // y = A x with x dense rows x `width`, row-major.
  void apply(const double* x, int width, double* y) const {
    for (int r = 0; r < rows; ++r) {
      double* yr = y + static_cast<size_t>(r) * width;
      std::fill(yr, yr + width, 0.0);
      for (const auto& [c, w] : row_entries[r]) {
        const double* xc = x + static_cast<size_t>(c) * width;
        for (int k = 0; k < width; ++k) yr[k] += w * xc[k];
      }
    }
  }

  bool operator==(const SparseMatrix& o) const {
    return rows == o.rows && cols == o.cols && row_entries == o.row_entries;
  }
};

}  // namespace tfm
