// Evaluation protocols over a test cohort: hide the middle visit
// (interpolation), the last visit (extrapolation), or everything but the
// baseline (trajectory), then score mean absolute error against the known
// ground truth. Includes the degenerate copy-reference predictor used as the
// analytic baseline, and anomaly localization for models trained on normals.
#pragma once
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "transformesh/cohort.hpp"
#include "transformesh/errors.hpp"
#include "transformesh/model.hpp"

namespace tfm {

enum class Protocol { Interpolation, Extrapolation, Trajectory };

inline std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Interpolation: return "interpolation";
    case Protocol::Extrapolation: return "extrapolation";
    default: return "trajectory";
  }
}

inline Protocol parse_protocol(const std::string& s) {
  if (s == "interpolation") return Protocol::Interpolation;
  if (s == "extrapolation") return Protocol::Extrapolation;
  if (s == "trajectory") return Protocol::Trajectory;
  throw ConfigError("unknown protocol '" + s + "'");
}

// Per-slot predictions as plain vertex buffers, one per canonical slot.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<std::vector<double>> predict(const SequenceBatch& batch) const = 0;
  virtual std::string name() const = 0;
};

class ModelPredictor : public Predictor {
 public:
  explicit ModelPredictor(const Model& model) : model_(model) {}
  std::vector<std::vector<double>> predict(const SequenceBatch& batch) const override {
    auto fwd = model_.forward(batch);
    std::vector<std::vector<double>> out;
    out.reserve(fwd.predictions.size());
    for (auto& p : fwd.predictions) out.push_back(p.values());
    return out;
  }
  std::string name() const override { return variant_name(model_.config().variant); }

 private:
  const Model& model_;
};

// The analytic lower bar: the reference mesh at every slot.
class CopyReferencePredictor : public Predictor {
 public:
  std::vector<std::vector<double>> predict(const SequenceBatch& batch) const override {
    return std::vector<std::vector<double>>(batch.slots.size(), batch.reference);
  }
  std::string name() const override { return "copy_reference"; }
};

inline double mean_absolute_error(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

inline std::vector<double> flatten_mesh(const TriangleMesh& mesh) {
  std::vector<double> out;
  out.reserve(mesh.vertices.size() * 3);
  for (const auto& v : mesh.vertices) {
    out.push_back(v.x);
    out.push_back(v.y);
    out.push_back(v.z);
  }
  return out;
}

inline double median_of(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline double median_absolute_deviation(const std::vector<double>& values) {
  const double med = median_of(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - med));
  return median_of(dev);
}

struct ProtocolRow {
  std::string subject_id;
  int month = 0;              // evaluated month
  double mae = 0.0;           // per-(subject, slot)
  double subject_mean = 0.0;  // per-subject pooled value (FME for trajectory)
};

struct ProtocolResult {
  Protocol protocol = Protocol::Interpolation;
  std::string predictor;
  std::vector<ProtocolRow> rows;
  std::vector<std::string> skipped;
  double median = 0.0;
  double mad = 0.0;
  int n_units = 0;

  // aggregation units: one per subject (single hidden slot, or the FME mean)
  std::vector<double> unit_values() const {
    std::vector<double> units;
    std::string current;
    for (const auto& row : rows)
      if (row.subject_id != current) {
        current = row.subject_id;
        units.push_back(row.subject_mean);
      }
    return units;
  }

  void finalize() {
    auto units = unit_values();
    median = median_of(units);
    mad = median_absolute_deviation(units);
    n_units = static_cast<int>(units.size());
  }
};

// One subject's masked evaluation view: the batch fed to the model plus the
// months that get scored.
struct EvalCase {
  bool eligible = false;
  SequenceBatch batch;
  std::vector<int> eval_months;
};

inline EvalCase make_eval_case(const SubjectData& subject, Protocol protocol) {
  EvalCase ec;
  std::vector<int> observed(subject.spec.visit_months);
  std::sort(observed.begin(), observed.end());

  auto hide = [&](SequenceBatch& batch, int month) {
    auto& slot = batch.slots[month_to_slot(month)];
    slot.status = SlotStatus::Missing;
    slot.input_vertices.clear();  // the hidden shape leaves the inputs entirely
    slot.true_vertices.clear();
  };

  switch (protocol) {
    case Protocol::Interpolation: {
      if (observed.size() < 3) return ec;  // needs a removable middle
      const int t_last = static_cast<int>(observed.size()) - 1;
      const int hidden = observed[t_last / 2];
      ec.batch = make_sequence_batch(subject);
      hide(ec.batch, hidden);
      ec.eval_months = {hidden};
      break;
    }
    case Protocol::Extrapolation: {
      if (observed.size() < 2) return ec;
      const int hidden = observed.back();
      ec.batch = make_sequence_batch(subject);
      hide(ec.batch, hidden);
      ec.eval_months = {hidden};
      break;
    }
    case Protocol::Trajectory: {
      const int last = observed.back();
      if (last < 24) return ec;  // no month at least two years out
      ec.batch = make_sequence_batch(subject);
      for (int month : kCanonicalMonths)
        if (month != 0 && ec.batch.slots[month_to_slot(month)].status != SlotStatus::Missing)
          hide(ec.batch, month);
      for (int month : kCanonicalMonths)
        if (month >= 24 && month <= last) ec.eval_months.push_back(month);
      break;
    }
  }
  ec.eligible = true;
  return ec;
}

inline ProtocolResult run_protocol(const Predictor& predictor, const Cohort& cohort,
                                   const std::vector<const SubjectData*>& subjects,
                                   Protocol protocol) {
  ProtocolResult result;
  result.protocol = protocol;
  result.predictor = predictor.name();
  for (const SubjectData* subject : subjects) {
    EvalCase ec = make_eval_case(*subject, protocol);
    if (!ec.eligible) {
      result.skipped.push_back(subject->spec.id);
      continue;
    }
    auto predictions = predictor.predict(ec.batch);
    double subject_total = 0.0;
    std::vector<double> maes;
    for (int month : ec.eval_months) {
      const int slot = month_to_slot(month);
      const double mae = mean_absolute_error(
          predictions[slot], flatten_mesh(subject->ground_truth[slot]));
      maes.push_back(mae);
      subject_total += mae;
    }
    const double subject_mean = subject_total / static_cast<double>(ec.eval_months.size());
    for (size_t k = 0; k < ec.eval_months.size(); ++k)
      result.rows.push_back({subject->spec.id, ec.eval_months[k], maes[k], subject_mean});
  }
  result.finalize();
  return result;
}

inline ProtocolResult run_interpolation(const Predictor& predictor, const Cohort& cohort,
                                        const std::vector<const SubjectData*>& subjects) {
  return run_protocol(predictor, cohort, subjects, Protocol::Interpolation);
}
inline ProtocolResult run_extrapolation(const Predictor& predictor, const Cohort& cohort,
                                        const std::vector<const SubjectData*>& subjects) {
  return run_protocol(predictor, cohort, subjects, Protocol::Extrapolation);
}
inline ProtocolResult run_trajectory(const Predictor& predictor, const Cohort& cohort,
                                     const std::vector<const SubjectData*>& subjects) {
  return run_protocol(predictor, cohort, subjects, Protocol::Trajectory);
}

namespace detail {

inline std::string metric_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_protocol_csv(const ProtocolResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "subject_id,month,mae,subject_mean_mae\n";
  for (const auto& row : result.rows)
    out << row.subject_id << ',' << row.month << ',' << detail::metric_double(row.mae) << ','
        << detail::metric_double(row.subject_mean) << "\n";
}

inline void write_summary_csv(const std::vector<ProtocolResult>& results,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "protocol,predictor,n_subjects,n_skipped,median,mad,median_x100,mad_x100\n";
  for (const auto& r : results)
    out << protocol_name(r.protocol) << ',' << r.predictor << ',' << r.n_units << ','
        << r.skipped.size() << ',' << detail::metric_double(r.median) << ','
        << detail::metric_double(r.mad) << ',' << detail::metric_double(r.median * 100.0) << ','
        << detail::metric_double(r.mad * 100.0) << "\n";
}

// --- anomaly localization -------------------------------------------------

struct AnomalyVisit {
  int month = 0;
  std::vector<double> vertex_error;  // per-vertex Euclidean error
};

struct AnomalySubject {
  std::string subject_id;
  double mean_inside = 0.0;
  double mean_outside = 0.0;
  double ratio = 0.0;
  std::vector<AnomalyVisit> visits;
};

struct AnomalyResult {
  std::vector<AnomalySubject> subjects;
  std::vector<std::string> skipped;

  double localized_fraction(double ratio_threshold) const {
    if (subjects.empty()) return 0.0;
    int hits = 0;
    for (const auto& s : subjects) hits += s.ratio >= ratio_threshold;
    return static_cast<double>(hits) / static_cast<double>(subjects.size());
  }
};

// Reconstruction error of a model trained on normal subjects, evaluated on
// progressors' observed visits at >= `min_month` months, split inside /
// outside the generator's true atrophy ball. `training_ids` is the model's
// training manifest: it must contain no progressors and no evaluated subject.
inline AnomalyResult run_anomaly(const Model& model, const Cohort& cohort,
                                 const std::set<std::string>& training_ids, int min_month = 24) {
  std::set<std::string> progressor_ids;
  for (const auto& s : cohort.subjects)
    if (s.spec.group == SubjectGroup::Progressor) progressor_ids.insert(s.spec.id);
  for (const auto& id : training_ids)
    if (progressor_ids.count(id))
      throw ManifestError("training manifest contains progressor '" + id + "'");

  AnomalyResult result;
  ModelPredictor predictor(model);
  for (const auto& subject : cohort.subjects) {
    if (subject.spec.group != SubjectGroup::Progressor) continue;
    if (training_ids.count(subject.spec.id))
      throw ManifestError("evaluation subject '" + subject.spec.id + "' was trained on");
    std::vector<int> late_months;
    for (const auto& [month, mesh] : subject.observed)
      if (month >= min_month) late_months.push_back(month);
    if (late_months.empty()) {
      result.skipped.push_back(subject.spec.id);
      continue;
    }

    SequenceBatch batch = make_sequence_batch(subject);
    auto predictions = predictor.predict(batch);

    const TriangleMesh& baseline = subject.ground_truth[0];
    const Vec3 center = baseline.vertices[subject.spec.atrophy_center];
    std::vector<char> inside(baseline.n_vertices(), 0);
    for (int v = 0; v < baseline.n_vertices(); ++v)
      inside[v] = norm(baseline.vertices[v] - center) <= subject.spec.atrophy_radius;

    AnomalySubject out;
    out.subject_id = subject.spec.id;
    double sum_in = 0.0, sum_out = 0.0;
    long n_in = 0, n_out = 0;
    for (int month : late_months) {
      const int slot = month_to_slot(month);
      const auto observed = flatten_mesh(subject.observed.at(month));
      AnomalyVisit visit;
      visit.month = month;
      visit.vertex_error.resize(baseline.n_vertices());
      for (int v = 0; v < baseline.n_vertices(); ++v) {
        const double dx = predictions[slot][3 * v] - observed[3 * v];
        const double dy = predictions[slot][3 * v + 1] - observed[3 * v + 1];
        const double dz = predictions[slot][3 * v + 2] - observed[3 * v + 2];
        const double err = std::sqrt(dx * dx + dy * dy + dz * dz);
        visit.vertex_error[v] = err;
        if (inside[v]) {
          sum_in += err;
          ++n_in;
        } else {
          sum_out += err;
          ++n_out;
        }
      }
      out.visits.push_back(std::move(visit));
    }
    out.mean_inside = n_in ? sum_in / static_cast<double>(n_in) : 0.0;
    out.mean_outside = n_out ? sum_out / static_cast<double>(n_out) : 0.0;
    out.ratio = out.mean_outside > 0.0 ? out.mean_inside / out.mean_outside
                                       : std::numeric_limits<double>::infinity();
    result.subjects.push_back(std::move(out));
  }
  return result;
}

// Vertex-colored heatmap: linear blue-to-red map with the error range
// recorded in the header comment.
inline void write_heatmap_ply(const TriangleMesh& mesh, const std::vector<double>& vertex_error,
                              const std::string& path) {
  double lo = vertex_error[0], hi = vertex_error[0];
  for (double e : vertex_error) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  VertexColors colors(vertex_error.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (size_t v = 0; v < vertex_error.size(); ++v) {
    const double u = (vertex_error[v] - lo) / span;
    colors[v] = {static_cast<std::uint8_t>(255.0 * u + 0.5), 0,
                 static_cast<std::uint8_t>(255.0 * (1.0 - u) + 0.5)};
  }
  save_mesh(mesh, path, MeshFormat::PlyBinary, colors,
            {"error_min " + detail::metric_double(lo), "error_max " + detail::metric_double(hi)});
}

inline void write_anomaly_csv(const AnomalyResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "subject_id,mean_inside,mean_outside,ratio\n";
  for (const auto& s : result.subjects)
    out << s.subject_id << ',' << detail::metric_double(s.mean_inside) << ','
        << detail::metric_double(s.mean_outside) << ',' << detail::metric_double(s.ratio)
        << "\n";
}

}  // namespace tfm
