// Training loop for the longitudinal models: reference-substitution
// augmentation, the exponentially weighted deformation loss over supervised
// slots, Adam optimization, CSV logging and best/last checkpoints.
#pragma once
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "transformesh/checkpoint.hpp"
#include "transformesh/errors.hpp"
#include "transformesh/model.hpp"
#include "transformesh/optim.hpp"

namespace tfm {

enum class WeightMode { ExpIndex, ExpCapped };

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "exp_index") return WeightMode::ExpIndex;
  if (s == "exp_capped") return WeightMode::ExpCapped;
  throw ConfigError("unknown weight_mode '" + s + "'");
}

struct LossConfig {
  double alpha = 1e-4;
  WeightMode weight_mode = WeightMode::ExpCapped;
  int cap = 4;
};

// e^t with t the visit-slot index, optionally capped for numerical headroom.
inline double slot_weight(const LossConfig& cfg, int slot) {
  const int t = cfg.weight_mode == WeightMode::ExpIndex ? slot : std::min(slot, cfg.cap);
  return std::exp(static_cast<double>(t));
}

// Mean absolute coordinate difference against a fixed target.
inline Tensor mae_to(const Tensor& pred, const std::vector<double>& target) {
  return mean(tfm::abs(sub(pred, Tensor::from(pred.shape(), target))));
}

// Sum over supervised slots of e^{w(t)} mae(pred_t, truth_t) - alpha *
// mae(pred_t, reference). Missing slots contribute nothing; augmented slots
// are supervised against their hidden true shape.
inline Tensor sequence_loss(const std::vector<Tensor>& predictions, const SequenceBatch& batch,
                            const LossConfig& cfg) {
  Tensor total;
  for (size_t t = 0; t < batch.slots.size(); ++t) {
    const auto& slot = batch.slots[t];
    if (slot.status == SlotStatus::Missing) continue;
    Tensor fit = scale(mae_to(predictions[t], slot.true_vertices),
                       slot_weight(cfg, static_cast<int>(t)));
    Tensor reg = scale(mae_to(predictions[t], batch.reference), -cfg.alpha);
    Tensor term = add(fit, reg);
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) throw NoSupervisedSlotError("every slot in the batch is missing");
  return total;
}

struct AugmentationConfig {
  double p_substitute = 0.15;
  unsigned long long seed = 0;
};

// Each non-reference observed slot independently becomes "augmented" with
// probability p: its input turns into the reference while its true shape
// stays as the loss target. Slot 0 is never touched.
inline SequenceBatch augment_batch(const SequenceBatch& batch, const AugmentationConfig& cfg,
                                   std::mt19937_64& rng) {
  SequenceBatch out = batch;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (size_t t = 1; t < out.slots.size(); ++t) {
    auto& slot = out.slots[t];
    if (slot.status != SlotStatus::Observed) continue;
    if (u(rng) < cfg.p_substitute) {
      slot.status = SlotStatus::Augmented;
      slot.input_vertices = out.reference;
    }
  }
  return out;
}

inline SequenceBatch augment_batch(const SequenceBatch& batch, const AugmentationConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return augment_batch(batch, cfg, rng);
}

struct TrainConfig {
  int epochs = 100;
  AdamConfig adam;
  LossConfig loss;
  AugmentationConfig aug;
  unsigned long long seed = 42;
  std::string out_dir;  // empty = no files written
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  AdamState state;
};

namespace detail {

inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "epoch,train_loss,val_loss,wall_seconds\n";
  for (const auto& row : log)
    out << row.epoch << ',' << csv_double(row.train_loss) << ',' << csv_double(row.val_loss)
        << ',' << csv_double(row.wall_seconds) << "\n";
}

}  // namespace detail

inline double evaluate_mean_loss(const Model& model, const std::vector<SequenceBatch>& batches,
                                 const LossConfig& cfg) {
  double total = 0.0;
  for (const auto& batch : batches)
    total += sequence_loss(model.forward(batch).predictions, batch, cfg).item();
  return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
}

// Per epoch: seeded shuffle, per-subject augment / forward / loss / backward /
// Adam step. Aborts with DivergenceError (after checkpointing the last finite
// state) when the loss stops being finite.
inline TrainResult train(Model& model, const std::vector<SequenceBatch>& train_batches,
                         const std::vector<SequenceBatch>& val_batches, const TrainConfig& cfg) {
  TrainResult result;
  result.state = AdamState::init(model.parameters());
  const bool to_disk = !cfg.out_dir.empty();
  if (to_disk) std::filesystem::create_directories(cfg.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<size_t> order(train_batches.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // parameters at the most recent finite loss; a huge gradient can overflow
  // the Adam moments and poison the parameters after the loss was evaluated
  std::vector<std::vector<double>> finite_params;
  for (const auto& p : model.parameters()) finite_params.push_back(p.tensor.values());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::seed_seq seq{static_cast<unsigned long long>(cfg.seed),
                      static_cast<unsigned long long>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (size_t i : order) {
      SequenceBatch batch = augment_batch(train_batches[i], cfg.aug, rng);
      Tensor loss = sequence_loss(model.forward(batch).predictions, batch, cfg.loss);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        auto& params = model.parameters();
        for (size_t p = 0; p < params.size(); ++p) params[p].tensor.values() = finite_params[p];
        if (to_disk) {
          save_checkpoint(model.parameters(), nullptr, cfg.out_dir + "/last.ckpt");
          detail::write_train_log(cfg.out_dir + "/log.csv", result.log);
        }
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
      }
      for (size_t p = 0; p < model.parameters().size(); ++p)
        finite_params[p] = model.parameters()[p].tensor.values();
      epoch_loss += value;
      backward(loss);
      adam_step(model.parameters(), result.state, cfg.adam);
      zero_grad(model.parameters());
    }
    epoch_loss /= train_batches.empty() ? 1.0 : static_cast<double>(train_batches.size());

    const double val_loss = evaluate_mean_loss(model, val_batches, cfg.loss);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back({epoch, epoch_loss, val_loss, wall});

    if (!val_batches.empty() && val_loss < result.best_val) {
      result.best_val = val_loss;
      result.best_epoch = epoch;
      if (to_disk) save_checkpoint(model.parameters(), &result.state, cfg.out_dir + "/best.ckpt");
    }
  }

  if (to_disk) {
    save_checkpoint(model.parameters(), &result.state, cfg.out_dir + "/last.ckpt");
    if (val_batches.empty() || result.best_epoch < 0)
      save_checkpoint(model.parameters(), &result.state, cfg.out_dir + "/best.ckpt");
    detail::write_train_log(cfg.out_dir + "/log.csv", result.log);
  }
  return result;
}

}  // namespace tfm
