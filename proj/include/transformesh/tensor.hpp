// Dense float64 tensors with reverse-mode differentiation. Each op builds a
// node holding its inputs and a closure that scatters the node's gradient
// into them; backward() walks the graph once in reverse topological order.
// Graphs are single-threaded; parameter tensors outlive the graphs built on
// top of them and accumulate gradients until zero_grad.
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/sparse.hpp"

namespace tfm {

using Shape = std::vector<int>;

namespace detail {

inline size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  double* grad_data() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

// Index table for gather_rows; negative entries are filler slots that read
// zeros and receive no gradient.
struct IndexTable {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> idx;  // row-major

  int at(int r, int c) const { return idx[static_cast<size_t>(r) * cols + c]; }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false) {
    node_ = std::make_shared<detail::TensorNode>();
    node_->value.assign(detail::shape_size(shape), 0.0);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    if (values.size() != detail::shape_size(shape))
      throw ShapeError("value count " + std::to_string(values.size()) + " does not fill " +
                       detail::shape_str(shape));
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[i]; }
  size_t size() const { return node_->value.size(); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }

  double item() const {
    if (size() != 1) throw NonScalarError("item() on tensor of shape " +
                                          detail::shape_str(node_->shape));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& grad() {
    node_->grad_data();
    return node_->grad;
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.node()->requires_grad;
  if (needs) {
    out.node()->requires_grad = true;
    for (const auto& in : inputs) out.node()->parents.push_back(in.node());
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

// a + b, where b's shape may be a suffix of a's (broadcast over leading dims).
inline Tensor add(const Tensor& a, const Tensor& b) {
  const Shape &sa = a.shape(), &sb = b.shape();
  bool suffix = sb.size() <= sa.size() &&
                std::equal(sb.begin(), sb.end(), sa.end() - sb.size());
  if (!suffix)
    throw ShapeError("add: " + detail::shape_str(sa) + " vs " + detail::shape_str(sb));
  const size_t bs = b.size();
  std::vector<double> out(a.size());
  const double *pa = a.data(), *pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i % bs];
  auto an = a.node(), bn = b.node();
  return detail::make_op(sa, std::move(out), {a, b}, [an, bn, bs](detail::TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      double* ga = an->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += g[i];
    }
    if (bn->requires_grad) {
      double* gb = bn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i % bs] += g[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      double* ga = an->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += g[i];
    }
    if (bn->requires_grad) {
      double* gb = bn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      double* ga = an->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += g[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      double* gb = bn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += g[i] * an->value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a}, [an, s](detail::TensorNode& self) {
    double* ga = an->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += s * self.grad[i];
  });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + detail::shape_str(a.shape()) + " vs " +
                     detail::shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double *pa = a.data(), *pb = b.data();
  for (int i = 0; i < m; ++i) {
    double* oi = out.data() + static_cast<size_t>(i) * n;
    const double* ai = pa + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = pb + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) oi[j] += av * bk[j];
    }
  }
  auto an = a.node(), bn = b.node();
  return detail::make_op({m, n}, std::move(out), {a, b},
                         [an, bn, m, k, n](detail::TensorNode& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      double* ga = an->grad_data();
      const double* pb = bn->value.data();
      for (int i = 0; i < m; ++i) {
        const double* gi = g + static_cast<size_t>(i) * n;
        double* gai = ga + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double* bk = pb + static_cast<size_t>(kk) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += gi[j] * bk[j];
          gai[kk] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      double* gb = bn->grad_data();
      const double* pa = an->value.data();
      for (int i = 0; i < m; ++i) {
        const double* ai = pa + static_cast<size_t>(i) * k;
        const double* gi = g + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const double av = ai[kk];
          if (av == 0.0) continue;
          double* gbk = gb + static_cast<size_t>(kk) * n;
          for (int j = 0; j < n; ++j) gbk[j] += av * gi[j];
        }
      }
    }
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) throw ShapeError("concat: bad axis");
  Shape out_shape = s0;
  int axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis && s[d] != s0[d])
        throw ShapeError("concat: " + detail::shape_str(s) + " vs " + detail::shape_str(s0));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<double> out(detail::shape_size(out_shape));
  size_t offset = 0;
  std::vector<size_t> blocks(parts.size());
  for (size_t t = 0; t < parts.size(); ++t) {
    const size_t block = static_cast<size_t>(parts[t].dim(axis)) * inner;
    blocks[t] = block;
    const double* src = parts[t].data();
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * (axis_total * inner) + offset, src + o * block,
                  block * sizeof(double));
    offset += block;
  }

  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  const size_t row = static_cast<size_t>(axis_total) * inner;
  return detail::make_op(out_shape, std::move(out), parts,
                         [nodes, blocks, outer, row](detail::TensorNode& self) {
    const double* g = self.grad.data();
    size_t offset = 0;
    for (size_t t = 0; t < nodes.size(); ++t) {
      if (nodes[t]->requires_grad) {
        double* gp = nodes[t]->grad_data();
        for (size_t o = 0; o < outer; ++o) {
          const double* src = g + o * row + offset;
          double* dst = gp + o * blocks[t];
          for (size_t i = 0; i < blocks[t]; ++i) dst[i] += src[i];
        }
      }
      offset += blocks[t];
    }
  });
}

// Rows of x concatenated along each table row; filler slots read zeros and
// route no gradient anywhere.
inline Tensor gather_rows(const Tensor& x, std::shared_ptr<const IndexTable> table) {
  if (x.ndim() != 2)
    throw ShapeError("gather_rows: input must be 2-d, got " + detail::shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const int rows = table->rows, cols = table->cols;
  std::vector<double> out(static_cast<size_t>(rows) * cols * c, 0.0);
  const double* px = x.data();
  for (int r = 0; r < rows; ++r)
    for (int l = 0; l < cols; ++l) {
      const int idx = table->at(r, l);
      if (idx < 0) continue;
      if (idx >= n) throw ShapeError("gather_rows: index " + std::to_string(idx) +
                                     " out of range for " + detail::shape_str(x.shape()));
      std::memcpy(out.data() + (static_cast<size_t>(r) * cols + l) * c,
                  px + static_cast<size_t>(idx) * c, c * sizeof(double));
    }
  auto xn = x.node();
  return detail::make_op({rows, cols * c}, std::move(out), {x},
                         [xn, table, rows, cols, c](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    for (int r = 0; r < rows; ++r)
      for (int l = 0; l < cols; ++l) {
        const int idx = table->at(r, l);
        if (idx < 0) continue;
        const double* src = g + (static_cast<size_t>(r) * cols + l) * c;
        double* dst = gx + static_cast<size_t>(idx) * c;
        for (int k = 0; k < c; ++k) dst[k] += src[k];
      }
  });
}

inline Tensor slice(const Tensor& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 || len < 1 ||
      start + len > s[axis])
    throw ShapeError("slice: axis " + std::to_string(axis) + " [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") of " + detail::shape_str(s));
  Shape out_shape = s;
  out_shape[axis] = len;
  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const size_t in_row = static_cast<size_t>(s[axis]) * inner;
  const size_t out_row = static_cast<size_t>(len) * inner;

  std::vector<double> out(detail::shape_size(out_shape));
  for (size_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_row, x.data() + o * in_row + start * inner,
                out_row * sizeof(double));
  auto xn = x.node();
  return detail::make_op(out_shape, std::move(out), {x},
                         [xn, outer, inner, in_row, out_row, start](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    for (size_t o = 0; o < outer; ++o) {
      double* dst = gx + o * in_row + start * inner;
      const double* src = g + o * out_row;
      for (size_t i = 0; i < out_row; ++i) dst[i] += src[i];
    }
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (detail::shape_size(shape) != x.size())
    throw ShapeError("reshape: " + detail::shape_str(x.shape()) + " to " +
                     detail::shape_str(shape));
  auto xn = x.node();
  return detail::make_op(std::move(shape), x.values(), {x}, [xn](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

inline Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("transpose: need 2-d, got " + detail::shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = x.data()[static_cast<size_t>(i) * n + j];
  auto xn = x.node();
  return detail::make_op({n, m}, std::move(out), {x}, [xn, m, n](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        gx[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  });
}

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  auto xn = x.node();
  return detail::make_op({1}, {acc}, {x}, [xn](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    for (size_t i = 0; i < xn->value.size(); ++i) gx[i] += self.grad[0];
  });
}

inline Tensor sum(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("sum: bad axis");
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  size_t outer = 1, inner = 1;
  const int d_axis = s[axis];
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  std::vector<double> out(outer * inner, 0.0);
  for (size_t o = 0; o < outer; ++o)
    for (int a = 0; a < d_axis; ++a) {
      const double* src = x.data() + (o * d_axis + a) * inner;
      double* dst = out.data() + o * inner;
      for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  auto xn = x.node();
  return detail::make_op(out_shape, std::move(out), {x},
                         [xn, outer, inner, d_axis](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    for (size_t o = 0; o < outer; ++o)
      for (int a = 0; a < d_axis; ++a) {
        double* dst = gx + (o * d_axis + a) * inner;
        const double* src = g + o * inner;
        for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

inline Tensor mean(const Tensor& x, int axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

// Softmax along `axis`. Lanes whose entries are all -inf produce NaN; callers
// guarantee at least one finite entry per lane.
inline Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("softmax: bad axis");
  size_t outer = 1, inner = 1;
  const int d_axis = s[axis];
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  std::vector<double> out(x.size());
  for (size_t o = 0; o < outer; ++o)
    for (size_t i = 0; i < inner; ++i) {
      const size_t base = o * d_axis * inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < d_axis; ++a) m = std::max(m, x.data()[base + a * inner]);
      double z = 0.0;
      for (int a = 0; a < d_axis; ++a) {
        const double e = std::exp(x.data()[base + a * inner] - m);
        out[base + a * inner] = e;
        z += e;
      }
      for (int a = 0; a < d_axis; ++a) out[base + a * inner] /= z;
    }
  auto xn = x.node();
  return detail::make_op(s, std::move(out), {x},
                         [xn, outer, inner, d_axis](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    const double* w = self.value.data();
    for (size_t o = 0; o < outer; ++o)
      for (size_t i = 0; i < inner; ++i) {
        const size_t base = o * d_axis * inner + i;
        double dot = 0.0;
        for (int a = 0; a < d_axis; ++a) dot += w[base + a * inner] * g[base + a * inner];
        for (int a = 0; a < d_axis; ++a) {
          const size_t p = base + a * inner;
          gx[p] += w[p] * (g[p] - dot);
        }
      }
  });
}

// Layer normalization over the last axis with learnable gain/bias of that width.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const Shape& s = x.shape();
  const int d = s.back();
  if (gain.size() != static_cast<size_t>(d) || bias.size() != static_cast<size_t>(d))
    throw ShapeError("layer_norm: affine width " + detail::shape_str(gain.shape()) +
                     " does not match " + detail::shape_str(s));
  const size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> mu(rows), istd(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double m = 0.0;
    for (int i = 0; i < d; ++i) m += xr[i];
    m /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - m) * (xr[i] - m);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    mu[r] = m;
    istd[r] = is;
    double* yr = out.data() + r * d;
    for (int i = 0; i < d; ++i) yr[i] = (xr[i] - m) * is * gain.data()[i] + bias.data()[i];
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op(s, std::move(out), {x, gain, bias},
                         [xn, gn, bn, rows, d, mu, istd](detail::TensorNode& self) {
    const double* g = self.grad.data();
    for (size_t r = 0; r < rows; ++r) {
      const double* xr = xn->value.data() + r * d;
      const double* gr = g + r * d;
      const double is = istd[r], m = mu[r];
      if (gn->requires_grad) {
        double* gg = gn->grad_data();
        for (int i = 0; i < d; ++i) gg[i] += gr[i] * (xr[i] - m) * is;
      }
      if (bn->requires_grad) {
        double* gb = bn->grad_data();
        for (int i = 0; i < d; ++i) gb[i] += gr[i];
      }
      if (xn->requires_grad) {
        double* gx = xn->grad_data() + r * d;
        // dxhat, then the two mean corrections
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
          const double dxhat = gr[i] * gn->value[i];
          const double xhat = (xr[i] - m) * is;
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        for (int i = 0; i < d; ++i) {
          const double dxhat = gr[i] * gn->value[i];
          const double xhat = (xr[i] - m) * is;
          gx[i] += is * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
        }
      }
    }
  });
}

inline Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](detail::TensorNode& self) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    double* gx = xn->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

inline Tensor elu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out[i] = v > 0.0 ? v : std::expm1(v);
  }
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->value[i];
      gx[i] += self.grad[i] * (v > 0.0 ? 1.0 : std::exp(v));
    }
  });
}

inline Tensor abs(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x.data()[i]);
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->value[i];
      gx[i] += self.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

// Fixed sparse matrix times dense features; `fwd` and its transpose are owned
// by the caller and must outlive the graph.
inline Tensor sparse_matmul(std::shared_ptr<const SparseMatrix> fwd,
                            std::shared_ptr<const SparseMatrix> fwd_t, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(0) != fwd->cols)
    throw ShapeError("sparse_matmul: [" + std::to_string(fwd->rows) + "," +
                     std::to_string(fwd->cols) + "] vs " + detail::shape_str(x.shape()));
  const int width = x.dim(1);
  std::vector<double> out(static_cast<size_t>(fwd->rows) * width);
  fwd->apply(x.data(), width, out.data());
  auto xn = x.node();
  return detail::make_op({fwd->rows, width}, std::move(out), {x},
                         [xn, fwd_t, width](detail::TensorNode& self) {
    double* gx = xn->grad_data();
    const double* g = self.grad.data();
    for (int r = 0; r < fwd_t->rows; ++r) {
      double* dst = gx + static_cast<size_t>(r) * width;
      for (const auto& [c, w] : fwd_t->row_entries[r]) {
        const double* src = g + static_cast<size_t>(c) * width;
        for (int k = 0; k < width; ++k) dst[k] += w * src[k];
      }
    }
  });
}

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw NonScalarError("backward() needs a scalar loss, got " +
                         detail::shape_str(loss.shape()));
  using detail::TensorNode;
  std::vector<TensorNode*> order;
  std::unordered_map<TensorNode*, int> state;  // 0 unseen, 1 open, 2 done
  std::vector<TensorNode*> stack{loss.node().get()};
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    int& st = state[n];
    if (st == 0) {
      st = 1;
      for (const auto& p : n->parents)
        if (state[p.get()] == 0) stack.push_back(p.get());
    } else {
      stack.pop_back();
      if (st == 1) {
        st = 2;
        order.push_back(n);
      }
    }
  }
  loss.node()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace tfm
