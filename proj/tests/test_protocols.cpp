#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "transformesh/protocols.hpp"

using namespace tfm;
namespace tt = tfm::testing;

namespace {

SubjectData subject_with_visits(std::vector<int> months, double rate, unsigned long long seed,
                                double sigma = 0.0) {
  static TriangleMesh tmpl = make_cohort_template();
  SubjectSpec spec;
  spec.id = "sub_" + std::to_string(seed);
  spec.group = rate > 0 ? SubjectGroup::Progressor : SubjectGroup::Normal;
  spec.seed = seed;
  spec.atrophy_center = 40;
  spec.atrophy_radius = 0.8;
  spec.rate_per_month = rate;
  spec.noise_sigma = sigma;
  spec.visit_months = std::move(months);
  return generate_subject(tmpl, spec);
}

}  // namespace

TEST(Stats, MedianAndMad) {
  EXPECT_DOUBLE_EQ(median_of({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median_of({4, 1, 3, 2}), 2.5);
  EXPECT_DOUBLE_EQ(median_absolute_deviation({1, 2, 3, 4, 100}), 1.0);
  EXPECT_TRUE(std::isnan(median_of({})));
}

TEST(EvalCase, InterpolationHidesTheMiddleObservedVisit) {
  SubjectData subject = subject_with_visits({0, 12, 72}, 0.004, 1);
  EvalCase ec = make_eval_case(subject, Protocol::Interpolation);
  ASSERT_TRUE(ec.eligible);
  EXPECT_EQ(ec.eval_months, std::vector<int>{12});  // T=2, mu=1
  EXPECT_EQ(ec.batch.slots[month_to_slot(12)].status, SlotStatus::Missing);
  EXPECT_TRUE(ec.batch.slots[month_to_slot(12)].input_vertices.empty());
  EXPECT_EQ(ec.batch.slots[0].status, SlotStatus::Observed);
  EXPECT_EQ(ec.batch.slots[month_to_slot(72)].status, SlotStatus::Observed);

  // two observed visits: nothing removable in the middle
  EXPECT_FALSE(make_eval_case(subject_with_visits({0, 24}, 0.004, 2), Protocol::Interpolation)
                   .eligible);
}

TEST(EvalCase, ExtrapolationHidesTheLastVisit) {
  SubjectData subject = subject_with_visits({0, 6, 48}, 0.004, 3);
  EvalCase ec = make_eval_case(subject, Protocol::Extrapolation);
  ASSERT_TRUE(ec.eligible);
  EXPECT_EQ(ec.eval_months, std::vector<int>{48});
  EXPECT_EQ(ec.batch.slots[month_to_slot(48)].status, SlotStatus::Missing);
  EXPECT_FALSE(
      make_eval_case(subject_with_visits({0}, 0.004, 4), Protocol::Extrapolation).eligible);
}

TEST(EvalCase, TrajectoryUsesBaselineOnlyAndLateMonths) {
  SubjectData subject = subject_with_visits({0, 6, 48}, 0.004, 5);
  EvalCase ec = make_eval_case(subject, Protocol::Trajectory);
  ASSERT_TRUE(ec.eligible);
  EXPECT_EQ(ec.eval_months, (std::vector<int>{24, 36, 48}));
  for (size_t s = 1; s < ec.batch.slots.size(); ++s)
    EXPECT_EQ(ec.batch.slots[s].status, SlotStatus::Missing);
  EXPECT_EQ(ec.batch.slots[0].status, SlotStatus::Observed);

  // no ground-truth month at >= 24 within the attended range
  EXPECT_FALSE(
      make_eval_case(subject_with_visits({0, 6}, 0.004, 6), Protocol::Trajectory).eligible);
}

TEST(Protocols, CopyReferenceMatchesClosedForm) {
  Cohort cohort;
  cohort.template_mesh = make_cohort_template();
  for (unsigned long long s = 0; s < 6; ++s) {
    cohort.subjects.push_back(
        subject_with_visits({0, 6, 12, 24, 72}, 0.002 + 0.001 * s, 10 + s, 0.01));
    cohort.subjects.back().split = Split::Test;
  }
  auto subjects = cohort.split_subjects(Split::Test);
  CopyReferencePredictor oracle;

  for (Protocol protocol :
       {Protocol::Interpolation, Protocol::Extrapolation, Protocol::Trajectory}) {
    ProtocolResult result = run_protocol(oracle, cohort, subjects, protocol);
    ASSERT_EQ(result.rows.size() % cohort.subjects.size(), 0u);
    for (const auto& row : result.rows) {
      const SubjectData* subject = nullptr;
      for (const auto& s : cohort.subjects)
        if (s.spec.id == row.subject_id) subject = &s;
      ASSERT_NE(subject, nullptr);
      const auto reference = flatten_mesh(subject->observed.at(0));
      const auto truth = flatten_mesh(subject->ground_truth[month_to_slot(row.month)]);
      EXPECT_NEAR(row.mae, mean_absolute_error(reference, truth), 1e-12);
    }
    // median / MAD recomputable from the stored rows
    auto units = result.unit_values();
    EXPECT_DOUBLE_EQ(result.median, median_of(units));
    EXPECT_DOUBLE_EQ(result.mad, median_absolute_deviation(units));
  }
}

TEST(Protocols, HiddenShapeNeverReachesTheModel) {
  auto hierarchy = std::make_shared<MeshHierarchy>(
      build_hierarchy(make_cohort_template(), {4, 4}, {9, 9, 9}));
  ModelConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.channels = {4, 8};
  Model model(cfg, hierarchy);

  SubjectData subject = subject_with_visits({0, 12, 72}, 0.004, 21, 0.01);
  EvalCase ec = make_eval_case(subject, Protocol::Interpolation);
  ASSERT_TRUE(ec.eligible);
  auto fwd = model.forward(ec.batch);

  const std::uint64_t hidden_hash = fnv1a64(flatten_mesh(subject.observed.at(12)));
  const std::uint64_t reference_hash = fnv1a64(ec.batch.reference);
  for (size_t t = 0; t < fwd.input_hashes.size(); ++t) EXPECT_NE(fwd.input_hashes[t], hidden_hash);
  EXPECT_EQ(fwd.input_hashes[month_to_slot(12)], reference_hash);
}

TEST(Protocols, CsvRoundTripAndDeterminism) {
  Cohort cohort;
  cohort.template_mesh = make_cohort_template();
  for (unsigned long long s = 0; s < 5; ++s) {
    cohort.subjects.push_back(subject_with_visits({0, 6, 24, 48}, 0.003, 30 + s, 0.01));
    cohort.subjects.back().split = Split::Test;
  }
  CopyReferencePredictor oracle;
  ProtocolResult result =
      run_protocol(oracle, cohort, cohort.split_subjects(Split::Test), Protocol::Trajectory);

  auto dir = tt::scratch_dir("protocol_csv");
  write_protocol_csv(result, dir + "/a.csv");
  write_protocol_csv(result, dir + "/b.csv");
  EXPECT_EQ(tt::read_file(dir + "/a.csv"), tt::read_file(dir + "/b.csv"));

  // independent re-computation from the raw CSV reproduces median and MAD
  std::ifstream in(dir + "/a.csv");
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, double> by_subject;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string id, month, mae, subject_mean;
    std::getline(ls, id, ',');
    std::getline(ls, month, ',');
    std::getline(ls, mae, ',');
    std::getline(ls, subject_mean, ',');
    by_subject[id] = std::stod(subject_mean);
  }
  std::vector<double> units;
  for (auto& [id, v] : by_subject) units.push_back(v);
  EXPECT_DOUBLE_EQ(median_of(units), result.median);
  EXPECT_DOUBLE_EQ(median_absolute_deviation(units), result.mad);

  std::vector<ProtocolResult> all{result};
  write_summary_csv(all, dir + "/summary.csv");
  std::string summary = tt::read_file(dir + "/summary.csv");
  EXPECT_NE(summary.find("trajectory,copy_reference"), std::string::npos);
  EXPECT_NE(summary.find("median_x100"), std::string::npos);
}

TEST(Anomaly, ManifestGuards) {
  Cohort cohort;
  cohort.template_mesh = make_cohort_template();
  cohort.subjects.push_back(subject_with_visits({0, 24, 72}, 0.004, 41, 0.01));
  cohort.subjects[0].spec.id = "p0";

  auto hierarchy = std::make_shared<MeshHierarchy>(
      build_hierarchy(make_cohort_template(), {4, 4}, {9, 9, 9}));
  ModelConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.channels = {4, 8};
  Model model(cfg, hierarchy);

  EXPECT_THROW(run_anomaly(model, cohort, {"p0"}), ManifestError);
}

TEST(Anomaly, ZeroInitModelLocalizesTrueAtrophy) {
  // with the zero-initialized head the model predicts the reference, so the
  // error concentrates exactly where the generator removed tissue
  Cohort cohort;
  cohort.template_mesh = make_cohort_template();
  const double diag = bbox_diagonal(cohort.template_mesh);
  for (unsigned long long s = 0; s < 8; ++s) {
    cohort.subjects.push_back(
        subject_with_visits({0, 6, 36, 72}, 0.0012 * diag, 50 + s, 0.005 * diag));
    cohort.subjects.back().spec.id = "p" + std::to_string(s);
  }
  // one subject with no late visits gets skipped
  cohort.subjects.push_back(subject_with_visits({0, 6}, 0.0012 * diag, 77, 0.005 * diag));
  cohort.subjects.back().spec.id = "early";

  auto hierarchy = std::make_shared<MeshHierarchy>(
      build_hierarchy(make_cohort_template(), {4, 4}, {9, 9, 9}));
  ModelConfig cfg;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.channels = {4, 8};
  Model model(cfg, hierarchy);

  AnomalyResult result = run_anomaly(model, cohort, {"sub_normal_a", "sub_normal_b"});
  ASSERT_EQ(result.subjects.size(), 8u);
  EXPECT_EQ(result.skipped, std::vector<std::string>{"early"});
  for (const auto& s : result.subjects) EXPECT_GT(s.ratio, 1.0) << s.subject_id;
  EXPECT_GE(result.localized_fraction(1.5), 0.7);
}

TEST(Anomaly, HeatmapColorsSpanTheErrorRange) {
  TriangleMesh mesh{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}};
  auto dir = tt::scratch_dir("heatmap");
  write_heatmap_ply(mesh, {0.0, 0.5, 1.0}, dir + "/h.ply");

  const std::string raw = tt::read_file(dir + "/h.ply");
  EXPECT_NE(raw.find("comment error_min 0"), std::string::npos);
  EXPECT_NE(raw.find("comment error_max 1"), std::string::npos);
  EXPECT_NO_THROW(load_mesh(dir + "/h.ply", MeshFormat::PlyBinary));

  // vertex records: 3 doubles then r,g,b bytes
  const size_t body = raw.find("end_header\n") + 11;
  auto color_at = [&](int vertex) {
    const size_t offset = body + vertex * (24 + 3) + 24;
    return std::array<unsigned char, 3>{static_cast<unsigned char>(raw[offset]),
                                        static_cast<unsigned char>(raw[offset + 1]),
                                        static_cast<unsigned char>(raw[offset + 2])};
  };
  EXPECT_EQ(color_at(0), (std::array<unsigned char, 3>{0, 0, 255}));    // min = blue
  EXPECT_EQ(color_at(2), (std::array<unsigned char, 3>{255, 0, 0}));    // max = red
}
