// Central finite-difference verification of every differentiable op and of
// the full sequence loss on a toy problem. Used by the gradcheck CLI command
// and the acceptance suite.
#pragma once
#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "transformesh/model.hpp"
#include "transformesh/primitives.hpp"
#include "transformesh/tensor.hpp"
#include "transformesh/training.hpp"

namespace tfm {

// Max relative error between analytic input gradients and central finite
// differences of the scalar produced by `forward`, which must rebuild its
// graph from the current input values on every call.
inline double fd_max_rel_error(const std::function<Tensor()>& forward,
                               std::vector<Tensor> inputs, double h = 1e-5) {
  Tensor loss = forward();
  for (auto& in : inputs) in.zero_grad();
  backward(loss);
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

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = true;
  double seconds = 0.0;
};

namespace detail {

inline Tensor gc_rand(Shape shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> vals(shape_size(shape));
  for (auto& v : vals) v = d(rng);
  return Tensor::from(std::move(shape), std::move(vals), true);
}

inline Tensor gc_weights(const Tensor& like, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> vals(like.size());
  for (auto& v : vals) v = d(rng);
  return Tensor::from(like.shape(), std::move(vals));
}

}  // namespace detail

// One finite-difference entry per op, tolerance 1e-4.
inline GradCheckReport run_op_gradient_checks() {
  GradCheckReport report;
  const auto t0 = std::chrono::steady_clock::now();
  auto check = [&](const std::string& name, const std::function<Tensor()>& fwd,
                   std::vector<Tensor> inputs) {
    GradCheckEntry entry{name, fd_max_rel_error(fwd, std::move(inputs)), 1e-4, false};
    entry.pass = entry.max_rel_error < entry.tolerance;
    report.all_pass = report.all_pass && entry.pass;
    report.entries.push_back(entry);
  };

  using detail::gc_rand;
  using detail::gc_weights;
  {
    Tensor a = gc_rand({3, 4}, 1), b = gc_rand({3, 4}, 2);
    Tensor w = gc_weights(a, 100);
    check("add", [&] { return sum(mul(add(a, b), w)); }, {a, b});
    check("sub", [&] { return sum(mul(sub(a, b), w)); }, {a, b});
    check("mul", [&] { return sum(mul(mul(a, b), w)); }, {a, b});
    check("scale", [&] { return sum(mul(scale(a, -2.3), w)); }, {a});
  }
  {
    Tensor a = gc_rand({3, 4}, 3), bias = gc_rand({4}, 4);
    Tensor w = gc_weights(a, 101);
    check("add_broadcast", [&] { return sum(mul(add(a, bias), w)); }, {a, bias});
  }
  {
    Tensor a = gc_rand({3, 4}, 5), b = gc_rand({4, 5}, 6);
    Tensor w = gc_weights(Tensor({3, 5}), 102);
    check("matmul", [&] { return sum(mul(matmul(a, b), w)); }, {a, b});
  }
  {
    Tensor a = gc_rand({2, 3}, 7), b = gc_rand({1, 3}, 8);
    Tensor w = gc_weights(Tensor({3, 3}), 103);
    check("concat", [&] { return sum(mul(concat({a, b}, 0), w)); }, {a, b});
  }
  {
    auto table = std::make_shared<IndexTable>();
    table->rows = 3;
    table->cols = 2;
    table->idx = {0, 2, 1, -1, 2, 2};
    Tensor x = gc_rand({4, 3}, 9);
    Tensor w = gc_weights(Tensor({3, 6}), 104);
    check("gather_rows", [&] { return sum(mul(gather_rows(x, table), w)); }, {x});
  }
  {
    Tensor x = gc_rand({4, 5}, 10);
    Tensor w = gc_weights(Tensor({2, 5}), 105);
    check("slice", [&] { return sum(mul(slice(x, 0, 1, 2), w)); }, {x});
    Tensor w2 = gc_weights(Tensor({2, 10}), 106);
    check("reshape", [&] { return sum(mul(reshape(x, {2, 10}), w2)); }, {x});
    Tensor w3 = gc_weights(Tensor({5, 4}), 107);
    check("transpose", [&] { return sum(mul(transpose(x), w3)); }, {x});
  }
  {
    Tensor x = gc_rand({3, 4}, 11);
    Tensor w = gc_weights(Tensor({4}), 108);
    check("sum", [&] { return sum(x); }, {x});
    check("sum_axis", [&] { return sum(mul(sum(x, 0), w)); }, {x});
    check("mean", [&] { return mean(x); }, {x});
    Tensor w2 = gc_weights(Tensor({3}), 109);
    check("mean_axis", [&] { return sum(mul(mean(x, 1), w2)); }, {x});
  }
  {
    Tensor x = gc_rand({3, 5}, 12);
    Tensor w = gc_weights(x, 110);
    check("softmax", [&] { return sum(mul(softmax(x, 1), w)); }, {x});
  }
  {
    Tensor x = gc_rand({3, 8}, 13);
    Tensor gain = gc_rand({8}, 14, 0.5, 1.5), bias = gc_rand({8}, 15, -0.3, 0.3);
    Tensor w = gc_weights(x, 111);
    check("layer_norm", [&] { return sum(mul(layer_norm(x, gain, bias), w)); },
          {x, gain, bias});
  }
  {
    Tensor x = gc_rand({2, 6}, 16);
    Tensor w = gc_weights(x, 112);
    check("gelu", [&] { return sum(mul(gelu(x), w)); }, {x});
  }
  {
    // bounded away from the kinks of elu and abs
    Tensor x = gc_rand({2, 6}, 17, 0.2, 1.0);
    std::mt19937_64 rng(18);
    for (auto& v : x.values())
      if (rng() & 1) v = -v;
    Tensor w = gc_weights(x, 113);
    check("elu", [&] { return sum(mul(elu(x), w)); }, {x});
    check("abs", [&] { return sum(mul(tfm::abs(x), w)); }, {x});
  }
  {
    auto sp = std::make_shared<SparseMatrix>();
    sp->rows = 3;
    sp->cols = 5;
    sp->row_entries = {{{0, 0.5}, {4, 0.5}}, {{1, 1.0}}, {{2, 0.3}, {3, 0.7}}};
    auto spt = std::make_shared<SparseMatrix>(sp->transposed());
    Tensor x = gc_rand({5, 2}, 19);
    Tensor w = gc_weights(Tensor({3, 2}), 114);
    check("sparse_matmul", [&] { return sum(mul(sparse_matmul(sp, spt, x), w)); }, {x});
  }

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Full composed loss on a 12-vertex toy problem with S=3 and one block,
// differentiated against every parameter; tolerance 1e-3.
inline GradCheckEntry run_end_to_end_gradient_check() {
  auto hierarchy = std::make_shared<MeshHierarchy>(build_hierarchy(make_icosphere(0), {2}, {6, 4}));
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.slots = 3;
  cfg.mlp_ratio = 2;
  cfg.channels = {4};
  cfg.seed = 7;
  Model model(cfg, hierarchy);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.values()) v = d(rng);

  SequenceBatch batch;
  batch.reference.resize(static_cast<size_t>(model.n_vertices()) * 3);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  for (auto& v : batch.reference) v = pos(rng);
  batch.slots.resize(3);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (int t = 0; t < 3; ++t) {
    auto& slot = batch.slots[t];
    slot.month = 6 * t;
    slot.status = t == 2 ? SlotStatus::Missing
                         : (t == 1 ? SlotStatus::Augmented : SlotStatus::Observed);
    if (slot.status != SlotStatus::Missing) {
      slot.true_vertices = batch.reference;
      for (auto& v : slot.true_vertices) v += jitter(rng);
      slot.input_vertices =
          slot.status == SlotStatus::Augmented ? batch.reference : slot.true_vertices;
    }
  }

  // |.| kinks inside the finite-difference window invalidate the oracle:
  // nudge targets and parameters until every residual is in generic position
  auto min_abs_gap = [&] {
    auto fwd = model.forward(batch);
    double gap = std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < batch.slots.size(); ++t) {
      if (batch.slots[t].status == SlotStatus::Missing) continue;
      const auto& pred = fwd.predictions[t].values();
      for (size_t i = 0; i < pred.size(); ++i) {
        gap = std::min(gap, std::abs(pred[i] - batch.slots[t].true_vertices[i]));
        gap = std::min(gap, std::abs(pred[i] - batch.reference[i]));
      }
    }
    return gap;
  };
  std::mt19937_64 nudge_rng(91);
  std::uniform_real_distribution<double> nudge(-2e-3, 2e-3);
  for (int tries = 0; tries < 50 && min_abs_gap() < 1e-3; ++tries) {
    for (auto& slot : batch.slots)
      for (auto& v : slot.true_vertices) v += nudge(nudge_rng);
    for (auto& p : model.parameters())
      for (auto& v : p.tensor.values()) v += 0.1 * nudge(nudge_rng);
  }

  LossConfig loss_cfg;
  auto forward = [&] { return sequence_loss(model.forward(batch).predictions, batch, loss_cfg); };
  std::vector<Tensor> inputs;
  for (auto& p : model.parameters()) inputs.push_back(p.tensor);

  GradCheckEntry entry{"end_to_end_sequence_loss", fd_max_rel_error(forward, inputs), 1e-3,
                       false};
  entry.pass = entry.max_rel_error < entry.tolerance;
  return entry;
}

}  // namespace tfm
