#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "support.hpp"
#include "transformesh/cohort.hpp"

using namespace tfm;
namespace tt = tfm::testing;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> dir_contents(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root).string()] = tt::read_file(entry.path().string());
  return out;
}

}  // namespace

TEST(Subject, ZeroRateZeroNoiseIsConstant) {
  TriangleMesh tmpl = make_cohort_template();
  SubjectSpec spec;
  spec.id = "s";
  spec.seed = 3;
  spec.rate_per_month = 0.0;
  spec.noise_sigma = 0.0;
  spec.visit_months = {0, 12, 48, 72};
  SubjectData data = generate_subject(tmpl, spec);
  ASSERT_EQ(data.ground_truth.size(), kCanonicalMonths.size());
  for (const auto& gt : data.ground_truth) EXPECT_EQ(gt, data.ground_truth[0]);
  for (const auto& [month, mesh] : data.observed) EXPECT_EQ(mesh, data.ground_truth[0]);
}

TEST(Subject, CenterDisplacementIsRateTimesMonth) {
  TriangleMesh tmpl = make_cohort_template();
  SubjectSpec spec;
  spec.id = "s";
  spec.seed = 4;
  spec.group = SubjectGroup::Progressor;
  spec.atrophy_center = 17;
  spec.atrophy_radius = 0.8;
  spec.rate_per_month = 0.004;
  spec.noise_sigma = 0.0;
  spec.visit_months = {0};
  SubjectData data = generate_subject(tmpl, spec);
  const Vec3 base = data.ground_truth[0].vertices[17];
  for (size_t slot = 0; slot < kCanonicalMonths.size(); ++slot) {
    const double got = norm(data.ground_truth[slot].vertices[17] - base);
    EXPECT_NEAR(got, spec.rate_per_month * kCanonicalMonths[slot], 1e-12);
  }
}

TEST(Subject, MeanDisplacementMonotoneInRate) {
  TriangleMesh tmpl = make_cohort_template();
  double previous = -1.0;
  for (int k = 1; k <= 20; ++k) {
    SubjectSpec spec;
    spec.id = "s";
    spec.seed = 100 + k;  // different random warp per subject
    spec.group = SubjectGroup::Progressor;
    spec.atrophy_center = 99;
    spec.atrophy_radius = 0.8;
    spec.rate_per_month = 0.0004 * k;
    spec.noise_sigma = 0.0;
    spec.visit_months = {0};
    SubjectData data = generate_subject(tmpl, spec);
    double total = 0.0;
    for (int v = 0; v < tmpl.n_vertices(); ++v)
      total += norm(data.ground_truth.back().vertices[v] - data.ground_truth[0].vertices[v]);
    const double mean_disp = total / tmpl.n_vertices();
    EXPECT_GT(mean_disp, previous) << "rate step " << k;
    previous = mean_disp;
  }
}

TEST(Cohort, MissingnessMatchesTargets) {
  CohortConfig cfg;  // defaults: n=200, seed 42
  Cohort cohort = generate_cohort(cfg);
  ASSERT_EQ(cohort.subjects.size(), 200u);
  const double visits = mean_observed_visits(cohort);
  EXPECT_GE(visits, 2.925);  // 3.25 - 10%
  EXPECT_LE(visits, 3.575);  // 3.25 + 10%
  const double complete = complete_sequence_fraction(cohort);
  EXPECT_GE(complete, 0.01);
  EXPECT_LE(complete, 0.05);
  for (const auto& s : cohort.subjects) {
    EXPECT_TRUE(s.observed_at(0));
    EXPECT_EQ(s.ground_truth.size(), kCanonicalMonths.size());
    for (const auto& gt : s.ground_truth) EXPECT_EQ(gt.faces, cohort.template_mesh.faces);
  }
}

TEST(Cohort, AllNormalWhenFractionZero) {
  CohortConfig cfg;
  cfg.n_subjects = 30;
  cfg.fraction_progressors = 0.0;
  Cohort cohort = generate_cohort(cfg);
  for (const auto& s : cohort.subjects) {
    EXPECT_EQ(s.spec.group, SubjectGroup::Normal);
    EXPECT_EQ(s.spec.rate_per_month, 0.0);
  }
}

TEST(Cohort, StratifiedSplits) {
  Cohort cohort = generate_cohort({});
  std::map<Split, int> counts, progressors;
  for (const auto& s : cohort.subjects) {
    ++counts[s.split];
    if (s.spec.group == SubjectGroup::Progressor) ++progressors[s.split];
  }
  EXPECT_GT(counts[Split::Train], counts[Split::Val]);
  EXPECT_GT(counts[Split::Train], counts[Split::Test]);
  EXPECT_GT(counts[Split::Val], 0);
  EXPECT_GT(counts[Split::Test], 0);
  const double overall =
      static_cast<double>(progressors[Split::Train] + progressors[Split::Val] +
                          progressors[Split::Test]) /
      static_cast<double>(cohort.subjects.size());
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    const double frac = static_cast<double>(progressors[split]) / counts[split];
    EXPECT_NEAR(frac, overall, 0.05) << split_name(split);
  }
  // roughly 70/15/15
  EXPECT_NEAR(counts[Split::Train] / 200.0, 0.70, 0.03);
  EXPECT_NEAR(counts[Split::Val] / 200.0, 0.15, 0.03);
  EXPECT_NEAR(counts[Split::Test] / 200.0, 0.15, 0.03);
}

TEST(Cohort, ArchiveIsByteIdenticalAndReloadable) {
  CohortConfig cfg;
  cfg.n_subjects = 12;
  cfg.seed = 7;
  Cohort cohort = generate_cohort(cfg);

  auto dir_a = tt::scratch_dir("cohort_a");
  auto dir_b = tt::scratch_dir("cohort_b");
  save_cohort(cohort, dir_a);
  save_cohort(generate_cohort(cfg), dir_b);
  EXPECT_EQ(dir_contents(dir_a), dir_contents(dir_b));

  Cohort loaded = load_cohort(dir_a);
  ASSERT_EQ(loaded.subjects.size(), cohort.subjects.size());
  EXPECT_EQ(loaded.seed, cohort.seed);
  EXPECT_EQ(loaded.template_mesh, cohort.template_mesh);
  for (size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& a = cohort.subjects[i];
    const auto& b = loaded.subjects[i];
    EXPECT_EQ(a.spec.id, b.spec.id);
    EXPECT_EQ(static_cast<int>(a.split), static_cast<int>(b.split));
    EXPECT_EQ(a.spec.visit_months, b.spec.visit_months);
    EXPECT_EQ(a.spec.rate_per_month, b.spec.rate_per_month);
    EXPECT_EQ(a.ground_truth.size(), b.ground_truth.size());
    for (size_t g = 0; g < a.ground_truth.size(); ++g)
      EXPECT_EQ(a.ground_truth[g], b.ground_truth[g]);
    for (const auto& [month, mesh] : a.observed) EXPECT_EQ(mesh, b.observed.at(month));
  }
}

TEST(Cohort, SequenceBatchView) {
  CohortConfig cfg;
  cfg.n_subjects = 10;
  cfg.seed = 9;
  Cohort cohort = generate_cohort(cfg);
  const SubjectData& subject = cohort.subjects[0];
  SequenceBatch batch = make_sequence_batch(subject);
  ASSERT_EQ(batch.slots.size(), kCanonicalMonths.size());
  for (size_t s = 0; s < batch.slots.size(); ++s) {
    const int month = kCanonicalMonths[s];
    EXPECT_EQ(batch.slots[s].month, month);
    if (subject.observed_at(month)) {
      EXPECT_EQ(batch.slots[s].status, SlotStatus::Observed);
      EXPECT_EQ(batch.slots[s].input_vertices.size(),
                static_cast<size_t>(cohort.template_mesh.n_vertices()) * 3);
    } else {
      EXPECT_EQ(batch.slots[s].status, SlotStatus::Missing);
    }
  }
  // reference is the observed baseline scan
  EXPECT_EQ(batch.reference, batch.slots[0].input_vertices);
}
