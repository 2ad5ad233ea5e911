#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "support.hpp"
#include "transformesh/gradcheck.hpp"
#include "transformesh/primitives.hpp"
#include "transformesh/training.hpp"

using namespace tfm;
namespace tt = tfm::testing;

namespace {

std::shared_ptr<const MeshHierarchy> toy_hierarchy() {
  static auto h = std::make_shared<MeshHierarchy>(build_hierarchy(make_icosphere(0), {2}, {6, 4}));
  return h;
}

ModelConfig toy_config(ModelVariant variant, int slots = 3) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.depth = 1;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.slots = slots;
  cfg.mlp_ratio = 2;
  cfg.channels = {4};
  cfg.seed = 11;
  return cfg;
}

std::vector<double> flat_vertices(const TriangleMesh& mesh) {
  std::vector<double> out;
  for (const auto& v : mesh.vertices) {
    out.push_back(v.x);
    out.push_back(v.y);
    out.push_back(v.z);
  }
  return out;
}

SequenceBatch make_batch(int n_vertices, int slots, unsigned seed, double spread = 0.05) {
  SequenceBatch batch;
  batch.reference = flat_vertices(make_icosphere(0));
  batch.slots.resize(slots);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-spread, spread);
  for (int t = 0; t < slots; ++t) {
    auto& slot = batch.slots[t];
    slot.month = 6 * t;
    slot.status = SlotStatus::Observed;
    slot.true_vertices = batch.reference;
    for (auto& v : slot.true_vertices) v += d(rng);
    slot.input_vertices = slot.true_vertices;
  }
  (void)n_vertices;
  return batch;
}

}  // namespace

TEST(SlotWeight, MonotoneNondecreasing) {
  LossConfig capped;  // default exp_capped at 4
  LossConfig indexed;
  indexed.weight_mode = WeightMode::ExpIndex;
  for (int t = 0; t + 1 < 8; ++t) {
    EXPECT_LE(slot_weight(capped, t), slot_weight(capped, t + 1));
    EXPECT_LT(slot_weight(indexed, t), slot_weight(indexed, t + 1));
  }
  EXPECT_DOUBLE_EQ(slot_weight(indexed, 7), std::exp(7.0));
  EXPECT_DOUBLE_EQ(slot_weight(capped, 7), std::exp(4.0));
  EXPECT_DOUBLE_EQ(slot_weight(capped, 0), 1.0);
}

TEST(SequenceLoss, PerfectReferencePredictionIsZero) {
  SequenceBatch batch = make_batch(12, 1, 1, 0.0);
  // single observed slot at t=0, prediction = truth = reference
  std::vector<Tensor> preds{Tensor::from({12, 3}, batch.reference)};
  EXPECT_DOUBLE_EQ(sequence_loss(preds, batch, {}).item(), 0.0);
}

TEST(SequenceLoss, RegularizerRewardsDeformation) {
  SequenceBatch batch = make_batch(12, 3, 2, 0.08);
  // predictions equal the truth exactly, but truth != reference
  std::vector<Tensor> preds;
  double expected = 0.0;
  LossConfig cfg;
  for (int t = 0; t < 3; ++t) {
    preds.push_back(Tensor::from({12, 3}, batch.slots[t].true_vertices));
    double mae = 0.0;
    for (size_t i = 0; i < batch.reference.size(); ++i)
      mae += std::abs(batch.slots[t].true_vertices[i] - batch.reference[i]);
    mae /= static_cast<double>(batch.reference.size());
    expected += -cfg.alpha * mae;
  }
  const double got = sequence_loss(preds, batch, cfg).item();
  EXPECT_LT(got, 0.0);
  EXPECT_NEAR(got, expected, 1e-15);
}

TEST(SequenceLoss, MatchesHandComputedToyCase) {
  // two vertices, two slots; every number small enough to check by hand
  SequenceBatch batch;
  batch.reference = {0, 0, 0, 1, 0, 0};
  batch.slots.resize(2);
  batch.slots[0].status = SlotStatus::Observed;
  batch.slots[0].true_vertices = {0, 0, 0, 1, 0, 0};
  batch.slots[0].input_vertices = batch.slots[0].true_vertices;
  batch.slots[1].status = SlotStatus::Augmented;
  batch.slots[1].true_vertices = {0.1, 0, 0, 1, -0.2, 0};
  batch.slots[1].input_vertices = batch.reference;

  std::vector<Tensor> preds{Tensor::from({2, 3}, {0.02, 0, 0, 1, 0, 0}),
                            Tensor::from({2, 3}, {0.1, 0.04, 0, 1, -0.1, 0})};
  LossConfig cfg;
  cfg.alpha = 1e-3;

  // slot 0: mae(pred, truth) = 0.02/6, mae(pred, ref) = 0.02/6, weight e^0
  // slot 1: mae(pred, truth) = (0 + 0.04 + 0 + 0 + 0.1 + 0)/6, weight e^1
  //         mae(pred, ref)   = (0.1 + 0.04 + 0 + 0 + 0.1 + 0)/6
  const double expected = 1.0 * (0.02 / 6) - cfg.alpha * (0.02 / 6) +
                          std::exp(1.0) * (0.14 / 6) - cfg.alpha * (0.24 / 6);
  EXPECT_NEAR(sequence_loss(preds, batch, cfg).item(), expected, 1e-15);
}

TEST(SequenceLoss, AllMissingRejected) {
  SequenceBatch batch = make_batch(12, 2, 3);
  batch.slots[0].status = SlotStatus::Missing;
  batch.slots[1].status = SlotStatus::Missing;
  std::vector<Tensor> preds{Tensor::from({12, 3}, batch.reference),
                            Tensor::from({12, 3}, batch.reference)};
  EXPECT_THROW(sequence_loss(preds, batch, {}), NoSupervisedSlotError);
}

TEST(Augment, ZeroAndOneProbabilityLimits) {
  SequenceBatch batch = make_batch(12, 4, 4);
  batch.slots[2].status = SlotStatus::Missing;

  AugmentationConfig none{0.0, 7};
  SequenceBatch same = augment_batch(batch, none);
  for (size_t t = 0; t < batch.slots.size(); ++t)
    EXPECT_EQ(static_cast<int>(same.slots[t].status), static_cast<int>(batch.slots[t].status));

  AugmentationConfig all{0.9999999, 7};
  SequenceBatch aug = augment_batch(batch, all);
  EXPECT_EQ(aug.slots[0].status, SlotStatus::Observed);  // never the reference slot
  EXPECT_EQ(aug.slots[2].status, SlotStatus::Missing);   // untouched
  for (size_t t : {1u, 3u}) {
    EXPECT_EQ(aug.slots[t].status, SlotStatus::Augmented);
    EXPECT_EQ(aug.slots[t].input_vertices, batch.reference);       // input swapped
    EXPECT_EQ(aug.slots[t].true_vertices, batch.slots[t].true_vertices);  // target kept
  }
}

TEST(Augment, DeterministicUnderSeed) {
  SequenceBatch batch = make_batch(12, 8, 5);
  AugmentationConfig cfg{0.5, 99};
  SequenceBatch a = augment_batch(batch, cfg);
  SequenceBatch b = augment_batch(batch, cfg);
  for (size_t t = 0; t < batch.slots.size(); ++t)
    EXPECT_EQ(static_cast<int>(a.slots[t].status), static_cast<int>(b.slots[t].status));
}

TEST(Masking, LossAndGradientsIgnoreMissingContent) {
  Model model(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(-0.4, 0.4);
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.values()) v = d(rng);

  SequenceBatch batch = make_batch(12, 3, 6);
  batch.slots[1].status = SlotStatus::Missing;
  batch.slots[1].input_vertices.assign(batch.reference.size(), 42.0);

  LossConfig cfg;
  Tensor loss_a = sequence_loss(model.forward(batch).predictions, batch, cfg);
  backward(loss_a);
  std::vector<std::vector<double>> grads_a;
  for (auto& p : model.parameters()) grads_a.push_back(p.tensor.grad());
  zero_grad(model.parameters());

  for (auto& v : batch.slots[1].input_vertices) v = -v * 3.3 + 1.0;
  Tensor loss_b = sequence_loss(model.forward(batch).predictions, batch, cfg);
  backward(loss_b);

  EXPECT_EQ(std::memcmp(&loss_a.values()[0], &loss_b.values()[0], sizeof(double)), 0);
  for (size_t p = 0; p < grads_a.size(); ++p)
    EXPECT_EQ(std::memcmp(grads_a[p].data(), model.parameters()[p].tensor.grad().data(),
                          grads_a[p].size() * sizeof(double)),
              0)
        << model.parameters()[p].name;
}

TEST(Masking, AugmentedSlotsCarryGradient) {
  Model model(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
  SequenceBatch batch = make_batch(12, 3, 7);
  batch.slots[1].status = SlotStatus::Augmented;
  batch.slots[1].input_vertices = batch.reference;

  Tensor loss = sequence_loss(model.forward(batch).predictions, batch, {});
  backward(loss);
  double grad_norm = 0.0;
  for (auto& p : model.parameters())
    for (double g : p.tensor.grad()) grad_norm += std::abs(g);
  EXPECT_GT(grad_norm, 0.0);
}

TEST(EndToEnd, FiniteDifferenceOnToyProblem) {
  // <=20-vertex mesh, S=3, full model loss against every parameter; the
  // harness nudges the problem into generic position away from |.| kinks
  GradCheckEntry entry = run_end_to_end_gradient_check();
  EXPECT_TRUE(entry.pass) << "max relative error " << entry.max_rel_error;
  EXPECT_LT(entry.max_rel_error, 1e-3);
}

TEST(Train, ZeroEpochsReturnsInitialState) {
  Model model(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
  std::vector<double> before;
  for (auto& p : model.parameters())
    before.insert(before.end(), p.tensor.values().begin(), p.tensor.values().end());

  TrainConfig cfg;
  cfg.epochs = 0;
  TrainResult result = train(model, {make_batch(12, 3, 9)}, {}, cfg);
  EXPECT_TRUE(result.log.empty());
  std::vector<double> after;
  for (auto& p : model.parameters())
    after.insert(after.end(), p.tensor.values().begin(), p.tensor.values().end());
  EXPECT_EQ(before, after);
}

TEST(Train, LossDecreasesAndRunsAreIdentical) {
  auto run = [&](unsigned long long seed) {
    Model model(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.adam.lr = 5e-3;
    cfg.seed = seed;
    cfg.aug.p_substitute = 0.2;
    std::vector<SequenceBatch> data{make_batch(12, 3, 10, 0.1)};
    return train(model, data, data, cfg);
  };
  TrainResult a = run(5);
  TrainResult b = run(5);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (size_t e = 0; e < a.log.size(); ++e) {
    EXPECT_EQ(a.log[e].train_loss, b.log[e].train_loss);
    EXPECT_EQ(a.log[e].val_loss, b.log[e].val_loss);
  }
  EXPECT_LT(a.log.back().train_loss, 0.5 * a.log.front().train_loss);
}

TEST(Train, DivergenceAbortsWithCheckpoint) {
  auto dir = tt::scratch_dir("diverge");
  Model model(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.adam.lr = 1e154;  // guaranteed overflow within a couple of steps
  cfg.out_dir = dir;
  std::vector<SequenceBatch> data{make_batch(12, 3, 11, 0.1)};
  EXPECT_THROW(train(model, data, data, cfg), DivergenceError);
  EXPECT_TRUE(std::filesystem::exists(dir + "/last.ckpt"));
  // the checkpointed state is the last finite one
  Model fresh(toy_config(ModelVariant::TransforMesh), toy_hierarchy());
  load_checkpoint(fresh.parameters(), nullptr, dir + "/last.ckpt");
  for (auto& p : fresh.parameters())
    for (double v : p.tensor.values()) EXPECT_TRUE(std::isfinite(v));
}
