// Synthetic longitudinal cohorts with known ground truth: an elongated
// icosphere template, per-subject smooth baseline warps, progressive inward
// atrophy inside a ball around a chosen vertex, observation noise, and
// attrition-style missingness tuned to ~3.25 mean visits with ~3% complete
// sequences. Everything derives deterministically from the cohort seed.
#pragma once
#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/mesh.hpp"
#include "transformesh/mesh_io.hpp"
#include "transformesh/model.hpp"
#include "transformesh/primitives.hpp"

namespace tfm {

constexpr std::array<int, 8> kCanonicalMonths{0, 6, 12, 18, 24, 36, 48, 72};

inline int month_to_slot(int month) {
  for (size_t i = 0; i < kCanonicalMonths.size(); ++i)
    if (kCanonicalMonths[i] == month) return static_cast<int>(i);
  throw ValidationError("month " + std::to_string(month) + " is not on the canonical schedule");
}

enum class SubjectGroup { Normal, Progressor };
enum class Split { Train, Val, Test };

inline std::string group_name(SubjectGroup g) {
  return g == SubjectGroup::Normal ? "normal" : "progressor";
}
inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split '" + s + "'");
}

struct SubjectSpec {
  std::string id;
  SubjectGroup group = SubjectGroup::Normal;
  int atrophy_center = 0;       // template vertex index
  double atrophy_radius = 0.8;  // model units
  double rate_per_month = 0.0;  // inward displacement at the ball center
  double noise_sigma = 0.0;
  std::vector<int> visit_months;  // subset of the canonical schedule, 0 always
  unsigned long long seed = 0;
};

struct SubjectData {
  SubjectSpec spec;
  Split split = Split::Train;
  std::vector<TriangleMesh> ground_truth;  // one per canonical month, noise-free
  std::map<int, TriangleMesh> observed;    // by month, with noise

  bool observed_at(int month) const { return observed.count(month) > 0; }
  int last_observed_month() const { return observed.rbegin()->first; }
};

struct Cohort {
  TriangleMesh template_mesh;
  std::vector<SubjectData> subjects;
  unsigned long long seed = 0;

  std::vector<const SubjectData*> split_subjects(Split s) const {
    std::vector<const SubjectData*> out;
    for (const auto& sub : subjects)
      if (sub.split == s) out.push_back(&sub);
    return out;
  }
};

struct CohortConfig {
  int n_subjects = 200;
  double fraction_progressors = 0.7;
  double noise_sigma_frac = 0.005;    // of the template bounding-box diagonal
  double rate_min_frac = 0.0006;      // per month, of the diagonal
  double rate_max_frac = 0.0016;
  double atrophy_radius = 0.8;
  double completer_fraction = 0.03;   // attends every visit
  double retention_base = 0.665;      // visit j>0 observed with base * decay^j
  double retention_decay = 0.8;
  int warp_bumps = 8;
  double warp_amplitude_frac = 0.05;  // of the diagonal, total across bumps
  unsigned long long seed = 42;
};

inline TriangleMesh make_cohort_template() {
  return scale_mesh(make_icosphere(3), {2.0, 1.0, 1.0});
}

inline double bbox_diagonal(const TriangleMesh& mesh) {
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  return norm(hi - lo);
}

// Baseline = template warped by a sum of smooth Gaussian bumps, then per
// month the ball around the atrophy center moves inward along the baseline
// vertex normals by rate * month * cosine falloff. Observed visits add
// i.i.d. Gaussian noise; the noise-free shape is kept for every month.
inline SubjectData generate_subject(const TriangleMesh& tmpl, const SubjectSpec& spec,
                                    int warp_bumps = 8, double warp_amplitude_frac = 0.05) {
  SubjectData data;
  data.spec = spec;
  std::mt19937_64 rng(spec.seed);
  const double diag = bbox_diagonal(tmpl);

  TriangleMesh baseline = tmpl;
  {
    std::uniform_int_distribution<int> pick(0, tmpl.n_vertices() - 1);
    std::uniform_real_distribution<double> width(0.3, 0.8);
    std::uniform_real_distribution<double> amp(0.0, warp_amplitude_frac * diag /
                                                        std::max(1, warp_bumps));
    std::normal_distribution<double> dir(0.0, 1.0);
    for (int b = 0; b < warp_bumps; ++b) {
      const Vec3 center = tmpl.vertices[pick(rng)];
      const double s = width(rng);
      const Vec3 direction = normalized({dir(rng), dir(rng), dir(rng)});
      const double a = amp(rng);
      for (int v = 0; v < baseline.n_vertices(); ++v) {
        const Vec3 d = tmpl.vertices[v] - center;
        baseline.vertices[v] += direction * (a * std::exp(-dot(d, d) / (2.0 * s * s)));
      }
    }
  }

  const std::vector<Vec3> normals = vertex_normals(baseline);
  const Vec3 center = baseline.vertices[spec.atrophy_center];
  for (int month : kCanonicalMonths) {
    TriangleMesh gt = baseline;
    if (spec.rate_per_month > 0.0) {
      for (int v = 0; v < gt.n_vertices(); ++v) {
        const double d = norm(baseline.vertices[v] - center);
        if (d > spec.atrophy_radius) continue;
        const double falloff = 0.5 * (1.0 + std::cos(3.14159265358979323846 * d /
                                                     spec.atrophy_radius));
        gt.vertices[v] += normals[v] * (-spec.rate_per_month * month * falloff);
      }
    }
    data.ground_truth.push_back(std::move(gt));
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  for (int month : spec.visit_months) {
    TriangleMesh obs = data.ground_truth[month_to_slot(month)];
    if (spec.noise_sigma > 0.0)
      for (auto& v : obs.vertices) v += Vec3{noise(rng), noise(rng), noise(rng)};
    data.observed.emplace(month, std::move(obs));
  }
  return data;
}

inline Cohort generate_cohort(const CohortConfig& cfg) {
  if (cfg.n_subjects < 10) throw ValidationError("cohort needs at least 10 subjects");
  Cohort cohort;
  cohort.seed = cfg.seed;
  cohort.template_mesh = make_cohort_template();
  const double diag = bbox_diagonal(cohort.template_mesh);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick_vertex(0, cohort.template_mesh.n_vertices() - 1);
  std::uniform_real_distribution<double> rate(cfg.rate_min_frac * diag,
                                              cfg.rate_max_frac * diag);

  for (int i = 0; i < cfg.n_subjects; ++i) {
    SubjectSpec spec;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "sub_%04d", i);
    spec.id = buf;
    spec.seed = rng();
    spec.group = u(rng) < cfg.fraction_progressors ? SubjectGroup::Progressor
                                                   : SubjectGroup::Normal;
    spec.atrophy_center = pick_vertex(rng);
    spec.atrophy_radius = cfg.atrophy_radius;
    spec.rate_per_month = spec.group == SubjectGroup::Progressor ? rate(rng) : 0.0;
    spec.noise_sigma = cfg.noise_sigma_frac * diag;

    spec.visit_months.push_back(0);
    const bool completer = u(rng) < cfg.completer_fraction;
    // visit j observed with probability base * decay^j; with the defaults the
    // expected visit count is 0.03*8 + 0.97*(1 + 2.103) = 3.25
    for (size_t j = 1; j < kCanonicalMonths.size(); ++j) {
      const double retention =
          cfg.retention_base * std::pow(cfg.retention_decay, static_cast<double>(j));
      const double roll = u(rng);  // drawn for every visit to keep the stream aligned
      if (completer || roll < retention) spec.visit_months.push_back(kCanonicalMonths[j]);
    }

    SubjectData data = generate_subject(cohort.template_mesh, spec, cfg.warp_bumps,
                                        cfg.warp_amplitude_frac);
    cohort.subjects.push_back(std::move(data));
  }

  // stratified 70/15/15 split by group and rate tercile
  std::vector<std::vector<int>> strata(4);  // normals, then progressor terciles
  std::vector<std::pair<double, int>> progressors;
  for (size_t i = 0; i < cohort.subjects.size(); ++i) {
    if (cohort.subjects[i].spec.group == SubjectGroup::Normal)
      strata[0].push_back(static_cast<int>(i));
    else
      progressors.emplace_back(cohort.subjects[i].spec.rate_per_month, static_cast<int>(i));
  }
  std::sort(progressors.begin(), progressors.end());
  for (size_t k = 0; k < progressors.size(); ++k)
    strata[1 + (3 * k) / std::max<size_t>(progressors.size(), 1)].push_back(
        progressors[k].second);

  for (auto& stratum : strata) {
    std::shuffle(stratum.begin(), stratum.end(), rng);
    const size_t n = stratum.size();
    for (size_t k = 0; k < n; ++k) {
      Split split = Split::Train;
      if (k >= static_cast<size_t>(0.70 * n + 0.5)) split = Split::Val;
      if (k >= static_cast<size_t>(0.85 * n + 0.5)) split = Split::Test;
      cohort.subjects[stratum[k]].split = split;
    }
  }
  return cohort;
}

// Training/evaluation view of one subject over the canonical slots.
inline SequenceBatch make_sequence_batch(const SubjectData& subject) {
  SequenceBatch batch;
  auto flatten = [](const TriangleMesh& mesh) {
    std::vector<double> out;
    out.reserve(mesh.vertices.size() * 3);
    for (const auto& v : mesh.vertices) {
      out.push_back(v.x);
      out.push_back(v.y);
      out.push_back(v.z);
    }
    return out;
  };
  if (!subject.observed_at(0)) throw ValidationError("subject lacks the baseline visit");
  batch.reference = flatten(subject.observed.at(0));
  batch.slots.resize(kCanonicalMonths.size());
  for (size_t s = 0; s < kCanonicalMonths.size(); ++s) {
    auto& slot = batch.slots[s];
    slot.month = kCanonicalMonths[s];
    if (subject.observed_at(slot.month)) {
      slot.status = SlotStatus::Observed;
      slot.input_vertices = flatten(subject.observed.at(slot.month));
      slot.true_vertices = slot.input_vertices;
    } else {
      slot.status = SlotStatus::Missing;
    }
  }
  return batch;
}

inline double mean_observed_visits(const Cohort& cohort) {
  double total = 0.0;
  for (const auto& s : cohort.subjects) total += static_cast<double>(s.observed.size());
  return total / static_cast<double>(cohort.subjects.size());
}

inline double complete_sequence_fraction(const Cohort& cohort) {
  int complete = 0;
  for (const auto& s : cohort.subjects)
    complete += s.observed.size() == kCanonicalMonths.size();
  return static_cast<double>(complete) / static_cast<double>(cohort.subjects.size());
}

namespace detail {

inline std::string month_tag(int month) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", month);
  return buf;
}

inline std::string join_months(const std::vector<int>& months) {
  std::string out;
  for (size_t i = 0; i < months.size(); ++i)
    out += (i ? "," : "") + std::to_string(months[i]);
  return out;
}

}  // namespace detail

inline void save_cohort(const Cohort& cohort, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_mesh(cohort.template_mesh, dir + "/template.ply", MeshFormat::PlyBinary);

  std::ofstream manifest(dir + "/cohort.manifest", std::ios::binary);
  if (!manifest) throw IoError("cannot write cohort manifest");
  manifest << "transformesh-cohort v1\n";
  manifest << "seed " << cohort.seed << "\n";
  manifest << "subjects " << cohort.subjects.size() << "\n";
  for (const auto& s : cohort.subjects) {
    manifest << "subject " << s.spec.id << " split " << split_name(s.split) << " group "
             << group_name(s.spec.group) << " months " << detail::join_months(s.spec.visit_months)
             << "\n";
  }

  for (const auto& s : cohort.subjects) {
    const std::string sub_dir = dir + "/" + s.spec.id;
    fs::create_directories(sub_dir);
    std::ofstream meta(sub_dir + "/subject.meta", std::ios::binary);
    char num[40];
    meta << "id = " << s.spec.id << "\n";
    meta << "group = " << group_name(s.spec.group) << "\n";
    meta << "split = " << split_name(s.split) << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.spec.rate_per_month);
    meta << "rate_per_month = " << num << "\n";
    meta << "atrophy_center = " << s.spec.atrophy_center << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.spec.atrophy_radius);
    meta << "atrophy_radius = " << num << "\n";
    std::snprintf(num, sizeof(num), "%.17g", s.spec.noise_sigma);
    meta << "noise_sigma = " << num << "\n";
    meta << "seed = " << s.spec.seed << "\n";
    meta << "observed_months = " << detail::join_months(s.spec.visit_months) << "\n";

    for (size_t slot = 0; slot < kCanonicalMonths.size(); ++slot)
      save_mesh(s.ground_truth[slot],
                sub_dir + "/gt_month_" + detail::month_tag(kCanonicalMonths[slot]) + ".ply",
                MeshFormat::PlyBinary);
    for (const auto& [month, mesh] : s.observed)
      save_mesh(mesh, sub_dir + "/month_" + detail::month_tag(month) + ".ply",
                MeshFormat::PlyBinary);
  }
}

inline Cohort load_cohort(const std::string& dir) {
  std::ifstream manifest(dir + "/cohort.manifest", std::ios::binary);
  if (!manifest) throw IoError("cannot open '" + dir + "/cohort.manifest'");
  Cohort cohort;
  cohort.template_mesh = load_mesh(dir + "/template.ply", MeshFormat::PlyBinary);

  std::string line;
  if (!std::getline(manifest, line) || line != "transformesh-cohort v1")
    throw ParseError("cohort manifest: unknown version line '" + line + "'");
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "seed") ls >> cohort.seed;
    if (tag != "subject") continue;
    std::string id, kw, split, group, months;
    ls >> id >> kw >> split >> kw >> group >> kw >> months;

    SubjectData data;
    data.split = parse_split(split);
    const std::string sub_dir = dir + "/" + id;
    std::ifstream meta(sub_dir + "/subject.meta", std::ios::binary);
    if (!meta) throw IoError("cannot open '" + sub_dir + "/subject.meta'");
    std::string meta_line;
    while (std::getline(meta, meta_line)) {
      auto eq = meta_line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = meta_line.substr(0, eq);
      std::string value = meta_line.substr(eq + 1);
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      key = trim(key);
      value = trim(value);
      if (key == "id") data.spec.id = value;
      else if (key == "group")
        data.spec.group = value == "progressor" ? SubjectGroup::Progressor : SubjectGroup::Normal;
      else if (key == "rate_per_month") data.spec.rate_per_month = std::stod(value);
      else if (key == "atrophy_center") data.spec.atrophy_center = std::stoi(value);
      else if (key == "atrophy_radius") data.spec.atrophy_radius = std::stod(value);
      else if (key == "noise_sigma") data.spec.noise_sigma = std::stod(value);
      else if (key == "seed") data.spec.seed = std::stoull(value);
      else if (key == "observed_months") {
        std::istringstream ms(value);
        std::string tok;
        while (std::getline(ms, tok, ',')) data.spec.visit_months.push_back(std::stoi(tok));
      }
    }
    for (int month : kCanonicalMonths)
      data.ground_truth.push_back(load_mesh(
          sub_dir + "/gt_month_" + detail::month_tag(month) + ".ply", MeshFormat::PlyBinary));
    for (int month : data.spec.visit_months)
      data.observed.emplace(month, load_mesh(sub_dir + "/month_" + detail::month_tag(month) +
                                                 ".ply",
                                             MeshFormat::PlyBinary));
    cohort.subjects.push_back(std::move(data));
  }
  return cohort;
}

}  // namespace tfm
