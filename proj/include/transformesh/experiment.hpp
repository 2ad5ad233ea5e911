// Glue between key=value configuration files and the typed configs, plus the
// run-directory conventions shared by the CLI and the acceptance suite:
// hierarchy caching, per-split batch construction, config echoes and input
// manifests.
#pragma once
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "transformesh/cohort.hpp"
#include "transformesh/config.hpp"
#include "transformesh/hash.hpp"
#include "transformesh/hierarchy.hpp"
#include "transformesh/model.hpp"
#include "transformesh/training.hpp"

namespace tfm {

struct ExperimentConfig {
  CohortConfig cohort;
  std::vector<int> factors{4, 4};
  std::vector<int> spiral_lengths{9, 9, 9};
  ModelConfig model;
  TrainConfig train;
  std::string variant_label = "ttm";
};

inline ExperimentConfig parse_experiment_config(const KeyValueConfig& kv) {
  ExperimentConfig out;

  out.cohort.n_subjects = static_cast<int>(kv.get_int("n_subjects", 200));
  out.cohort.fraction_progressors = kv.get_double("fraction_progressors", 0.7);
  out.cohort.noise_sigma_frac = kv.get_double("noise_sigma_frac", 0.005);
  out.cohort.rate_min_frac = kv.get_double("rate_min_frac", 0.0006);
  out.cohort.rate_max_frac = kv.get_double("rate_max_frac", 0.0016);
  out.cohort.atrophy_radius = kv.get_double("atrophy_radius", 0.8);
  out.cohort.completer_fraction = kv.get_double("completer_fraction", 0.03);
  out.cohort.retention_base = kv.get_double("retention_base", 0.665);
  out.cohort.retention_decay = kv.get_double("retention_decay", 0.8);
  out.cohort.warp_bumps = static_cast<int>(kv.get_int("warp_bumps", 8));
  out.cohort.warp_amplitude_frac = kv.get_double("warp_amplitude_frac", 0.05);
  out.cohort.seed = static_cast<unsigned long long>(kv.get_int("cohort_seed", 42));

  out.factors = kv.get_int_list("factors", {4, 4});
  out.spiral_lengths = kv.get_int_list("spiral_lengths", {9, 9, 9});

  out.variant_label = kv.get_string("variant", "ttm");
  out.model.variant = parse_variant(out.variant_label);
  const int preset = preset_depth(out.variant_label);
  out.model.depth = preset > 0 ? preset : static_cast<int>(kv.get_int("depth", 1));
  out.model.width = static_cast<int>(kv.get_int("width", 64));
  out.model.heads = static_cast<int>(kv.get_int("heads", 4));
  out.model.slots = static_cast<int>(kv.get_int("slots", 8));
  out.model.mlp_ratio = static_cast<int>(kv.get_int("mlp_ratio", 4));
  out.model.final_layer_norm = kv.get_bool("final_layer_norm", true);
  out.model.fcbn_bottleneck = static_cast<int>(kv.get_int("fcbn_bottleneck", 0));
  out.model.missing_stop_gradient = kv.get_bool("missing_stop_gradient", false);
  out.model.channels = kv.get_int_list("channels", {8, 16});
  out.model.seed = static_cast<unsigned long long>(kv.get_int("model_seed", 42));

  out.train.epochs = static_cast<int>(kv.get_int("epochs", 120));
  out.train.adam.lr = kv.get_double("lr", 1e-3);
  out.train.adam.beta1 = kv.get_double("beta1", 0.9);
  out.train.adam.beta2 = kv.get_double("beta2", 0.999);
  out.train.adam.eps = kv.get_double("adam_eps", 1e-8);
  out.train.loss.alpha = kv.get_double("alpha", 1e-4);
  out.train.loss.weight_mode = parse_weight_mode(kv.get_string("weight_mode", "exp_capped"));
  out.train.loss.cap = static_cast<int>(kv.get_int("cap", 4));
  out.train.aug.p_substitute = kv.get_double("p_substitute", 0.15);
  out.train.seed = static_cast<unsigned long long>(kv.get_int("train_seed", 42));
  return out;
}

namespace detail {

inline std::string fmt_double_key(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace detail

// Every resolved value, for the config.echo file.
inline KeyValueConfig render_experiment_config(const ExperimentConfig& cfg) {
  KeyValueConfig kv;
  kv.set("n_subjects", std::to_string(cfg.cohort.n_subjects));
  kv.set("fraction_progressors", detail::fmt_double_key(cfg.cohort.fraction_progressors));
  kv.set("noise_sigma_frac", detail::fmt_double_key(cfg.cohort.noise_sigma_frac));
  kv.set("rate_min_frac", detail::fmt_double_key(cfg.cohort.rate_min_frac));
  kv.set("rate_max_frac", detail::fmt_double_key(cfg.cohort.rate_max_frac));
  kv.set("atrophy_radius", detail::fmt_double_key(cfg.cohort.atrophy_radius));
  kv.set("completer_fraction", detail::fmt_double_key(cfg.cohort.completer_fraction));
  kv.set("retention_base", detail::fmt_double_key(cfg.cohort.retention_base));
  kv.set("retention_decay", detail::fmt_double_key(cfg.cohort.retention_decay));
  kv.set("warp_bumps", std::to_string(cfg.cohort.warp_bumps));
  kv.set("warp_amplitude_frac", detail::fmt_double_key(cfg.cohort.warp_amplitude_frac));
  kv.set("cohort_seed", std::to_string(cfg.cohort.seed));
  kv.set("factors", detail::fmt_int_list(cfg.factors));
  kv.set("spiral_lengths", detail::fmt_int_list(cfg.spiral_lengths));
  kv.set("variant", cfg.variant_label);
  kv.set("depth", std::to_string(cfg.model.depth));
  kv.set("width", std::to_string(cfg.model.width));
  kv.set("heads", std::to_string(cfg.model.heads));
  kv.set("slots", std::to_string(cfg.model.slots));
  kv.set("mlp_ratio", std::to_string(cfg.model.mlp_ratio));
  kv.set("final_layer_norm", cfg.model.final_layer_norm ? "true" : "false");
  kv.set("fcbn_bottleneck", std::to_string(cfg.model.fcbn_bottleneck));
  kv.set("missing_stop_gradient", cfg.model.missing_stop_gradient ? "true" : "false");
  kv.set("channels", detail::fmt_int_list(cfg.model.channels));
  kv.set("model_seed", std::to_string(cfg.model.seed));
  kv.set("epochs", std::to_string(cfg.train.epochs));
  kv.set("lr", detail::fmt_double_key(cfg.train.adam.lr));
  kv.set("beta1", detail::fmt_double_key(cfg.train.adam.beta1));
  kv.set("beta2", detail::fmt_double_key(cfg.train.adam.beta2));
  kv.set("adam_eps", detail::fmt_double_key(cfg.train.adam.eps));
  kv.set("alpha", detail::fmt_double_key(cfg.train.loss.alpha));
  kv.set("weight_mode",
         cfg.train.loss.weight_mode == WeightMode::ExpIndex ? "exp_index" : "exp_capped");
  kv.set("cap", std::to_string(cfg.train.loss.cap));
  kv.set("p_substitute", detail::fmt_double_key(cfg.train.aug.p_substitute));
  kv.set("train_seed", std::to_string(cfg.train.seed));
  return kv;
}

// Load the cached hierarchy when it matches the template; build and cache it
// otherwise (or when a rebuild is forced).
inline std::shared_ptr<const MeshHierarchy> ensure_hierarchy(const std::string& cache_path,
                                                             const TriangleMesh& tmpl,
                                                             const std::vector<int>& factors,
                                                             const std::vector<int>& lengths,
                                                             bool rebuild = false) {
  if (!rebuild && !cache_path.empty() && std::filesystem::exists(cache_path)) {
    MeshHierarchy h = load_hierarchy(cache_path);
    if (h.template_mesh() == tmpl && h.n_levels() == static_cast<int>(factors.size()) + 1)
      return std::make_shared<MeshHierarchy>(std::move(h));
  }
  auto h = std::make_shared<MeshHierarchy>(build_hierarchy(tmpl, factors, lengths));
  if (!cache_path.empty()) save_hierarchy(*h, cache_path);
  return h;
}

inline std::vector<SequenceBatch> split_batches(const Cohort& cohort, Split split) {
  std::vector<SequenceBatch> out;
  for (const auto& subject : cohort.subjects)
    if (subject.split == split) out.push_back(make_sequence_batch(subject));
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
}

// MANIFEST lines: <fnv1a64>  <role>  <path>
inline void write_manifest(const std::string& dir,
                           const std::vector<std::pair<std::string, std::string>>& inputs) {
  std::string content;
  for (const auto& [role, path] : inputs)
    content += hex64(fnv1a64_file(path)) + "  " + role + "  " + path + "\n";
  write_text_file(dir + "/MANIFEST", content);
}

inline std::set<std::string> read_id_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open '" + path + "'");
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

}  // namespace tfm
