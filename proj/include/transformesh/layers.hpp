// Learnable building blocks: affine layers, spiral convolution over
// precomputed index tables, fixed pool/unpool transforms, and the pre-norm
// transformer encoder block with key masking.
#pragma once
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/optim.hpp"
#include "transformesh/sparse.hpp"
#include "transformesh/spiral.hpp"
#include "transformesh/tensor.hpp"

namespace tfm {

inline Tensor glorot_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(static_cast<size_t>(fan_in) * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

inline Tensor normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(detail::shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(int in, int out, std::mt19937_64& rng) {
    Linear l;
    l.weight = glorot_uniform(in, out, rng);
    l.bias = Tensor(Shape{out}, true);
    return l;
  }

  // Zero weights: the output-head convention that makes the initial
  // prediction equal the reference.
  static Linear zeros(int in, int out) {
    Linear l;
    l.weight = Tensor(Shape{in, out}, true);
    l.bias = Tensor(Shape{out}, true);
    return l;
  }

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

  void register_into(std::vector<Parameter>& params, const std::string& prefix) const {
    params.push_back({prefix + "/weight", weight});
    params.push_back({prefix + "/bias", bias});
  }
};

inline std::shared_ptr<const IndexTable> spiral_index_table(const SpiralTable& spirals) {
  auto table = std::make_shared<IndexTable>();
  table->rows = spirals.n_vertices;
  table->cols = spirals.length;
  table->idx = spirals.indices;
  return table;
}

struct SpiralConvLayer {
  std::shared_ptr<const IndexTable> table;
  Linear affine;         // (l * c_in) -> c_out
  bool activate = true;  // ELU, disabled on the output head

  static SpiralConvLayer create(std::shared_ptr<const IndexTable> table, int c_in, int c_out,
                                std::mt19937_64& rng, bool activate = true) {
    SpiralConvLayer layer;
    layer.affine = Linear::create(table->cols * c_in, c_out, rng);
    layer.table = std::move(table);
    layer.activate = activate;
    return layer;
  }

  static SpiralConvLayer zeros(std::shared_ptr<const IndexTable> table, int c_in, int c_out) {
    SpiralConvLayer layer;
    layer.affine = Linear::zeros(table->cols * c_in, c_out);
    layer.table = std::move(table);
    layer.activate = false;
    return layer;
  }

  Tensor operator()(const Tensor& features) const {
    if (features.ndim() != 2 || features.dim(0) != table->rows)
      throw ShapeError("spiral_conv: features " + detail::shape_str(features.shape()) +
                       " vs table rows " + std::to_string(table->rows));
    Tensor y = affine(gather_rows(features, table));
    return activate ? elu(y) : y;
  }

  void register_into(std::vector<Parameter>& params, const std::string& prefix) const {
    affine.register_into(params, prefix);
  }
};

// Fixed pool/unpool transforms with their transposes precomputed for backward.
struct PoolPair {
  std::shared_ptr<const SparseMatrix> down, down_t, up, up_t;

  static PoolPair create(const SparseMatrix& down, const SparseMatrix& up) {
    PoolPair p;
    p.down = std::make_shared<SparseMatrix>(down);
    p.down_t = std::make_shared<SparseMatrix>(down.transposed());
    p.up = std::make_shared<SparseMatrix>(up);
    p.up_t = std::make_shared<SparseMatrix>(up.transposed());
    return p;
  }
};

inline Tensor pool(const Tensor& features, const PoolPair& p) {
  return sparse_matmul(p.down, p.down_t, features);
}

inline Tensor unpool(const Tensor& features, const PoolPair& p) {
  return sparse_matmul(p.up, p.up_t, features);
}

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams create(int width) {
    LayerNormParams ln;
    ln.gain = Tensor::from({width}, std::vector<double>(width, 1.0), true);
    ln.bias = Tensor(Shape{width}, true);
    return ln;
  }

  void register_into(std::vector<Parameter>& params, const std::string& prefix) const {
    params.push_back({prefix + "/gain", gain});
    params.push_back({prefix + "/bias", bias});
  }
};

// Additive key mask: 0 for attendable slots, -inf for masked ones. Broadcast
// over query rows, so masked slots get exactly zero attention weight.
inline Tensor key_mask_row(const std::vector<bool>& masked) {
  std::vector<double> row(masked.size(), 0.0);
  for (size_t i = 0; i < masked.size(); ++i)
    if (masked[i]) row[i] = -std::numeric_limits<double>::infinity();
  return Tensor::from({static_cast<int>(masked.size())}, std::move(row));
}

struct TransformerBlock {
  int heads = 1;
  LayerNormParams ln_attn, ln_mlp;
  Linear wq, wk, wv, wo;
  Linear mlp_in, mlp_out;

  static TransformerBlock create(int width, int heads, int mlp_ratio, std::mt19937_64& rng) {
    if (width % heads != 0)
      throw ValidationError("width " + std::to_string(width) + " not divisible by " +
                            std::to_string(heads) + " heads");
    TransformerBlock b;
    b.heads = heads;
    b.ln_attn = LayerNormParams::create(width);
    b.ln_mlp = LayerNormParams::create(width);
    b.wq = Linear::create(width, width, rng);
    b.wk = Linear::create(width, width, rng);
    b.wv = Linear::create(width, width, rng);
    b.wo = Linear::create(width, width, rng);
    b.mlp_in = Linear::create(width, width * mlp_ratio, rng);
    b.mlp_out = Linear::create(width * mlp_ratio, width, rng);
    return b;
  }

  Tensor operator()(const Tensor& x, const Tensor& mask_row) const {
    const int width = x.dim(1);
    const int dh = width / heads;
    Tensor h = layer_norm(x, ln_attn.gain, ln_attn.bias);
    Tensor q = wq(h), k = wk(h), v = wv(h);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (int hd = 0; hd < heads; ++hd) {
      Tensor qh = slice(q, 1, hd * dh, dh);
      Tensor kh = slice(k, 1, hd * dh, dh);
      Tensor vh = slice(v, 1, hd * dh, dh);
      Tensor logits = add(scale(matmul(qh, transpose(kh)), inv_sqrt), mask_row);
      head_out.push_back(matmul(softmax(logits, 1), vh));
    }
    Tensor attended = add(x, wo(concat(head_out, 1)));
    Tensor m = layer_norm(attended, ln_mlp.gain, ln_mlp.bias);
    return add(attended, mlp_out(gelu(mlp_in(m))));
  }

  void register_into(std::vector<Parameter>& params, const std::string& prefix) const {
    ln_attn.register_into(params, prefix + "/ln_attn");
    wq.register_into(params, prefix + "/wq");
    wk.register_into(params, prefix + "/wk");
    wv.register_into(params, prefix + "/wv");
    wo.register_into(params, prefix + "/wo");
    ln_mlp.register_into(params, prefix + "/ln_mlp");
    mlp_in.register_into(params, prefix + "/mlp_in");
    mlp_out.register_into(params, prefix + "/mlp_out");
  }
};

struct PositionEmbedding {
  Tensor table;  // [slots, width]

  static PositionEmbedding create(int slots, int width, std::mt19937_64& rng) {
    PositionEmbedding p;
    p.table = normal_init({slots, width}, 0.02, rng);
    return p;
  }

  void register_into(std::vector<Parameter>& params, const std::string& prefix) const {
    params.push_back({prefix + "/table", table});
  }
};

// seq: [S, D]. Masked slots are excluded as attention keys but still produce
// outputs; at least one slot must stay unmasked.
inline Tensor transformer_encode(const Tensor& seq, const std::vector<bool>& key_mask,
                                 const std::vector<TransformerBlock>& blocks,
                                 const PositionEmbedding& pos,
                                 const LayerNormParams* final_ln = nullptr) {
  if (seq.ndim() != 2 || pos.table.shape() != seq.shape())
    throw ShapeError("transformer_encode: seq " + detail::shape_str(seq.shape()) +
                     " vs positions " + detail::shape_str(pos.table.shape()));
  if (static_cast<int>(key_mask.size()) != seq.dim(0))
    throw ShapeError("transformer_encode: mask size " + std::to_string(key_mask.size()) +
                     " vs " + detail::shape_str(seq.shape()));
  bool any_open = false;
  for (bool m : key_mask) any_open = any_open || !m;
  if (!any_open) throw AllMaskedError("every slot is masked");

  Tensor mask_row = key_mask_row(key_mask);
  Tensor x = add(seq, pos.table);
  for (const auto& block : blocks) x = block(x, mask_row);
  if (final_ln) x = layer_norm(x, final_ln->gain, final_ln->bias);
  return x;
}

}  // namespace tfm
