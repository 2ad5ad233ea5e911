// Command-line harness: cohort generation, hierarchy precomputation,
// training, protocol evaluation, anomaly heatmaps, and gradient checking.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include "transformesh/experiment.hpp"
#include "transformesh/gradcheck.hpp"
#include "transformesh/protocols.hpp"

namespace fs = std::filesystem;
using namespace tfm;

namespace {

KeyValueConfig load_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  KeyValueConfig kv =
      config_path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(config_path);
  for (const auto& kvpair : overrides) {
    const auto eq = kvpair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + kvpair + "' is not key=value");
    kv.set(kvpair.substr(0, eq), kvpair.substr(eq + 1));
  }
  return kv;
}

std::string default_hierarchy_path(const std::string& cohort_dir) {
  return cohort_dir + "/hierarchy.cache";
}

struct LoadedRun {
  ExperimentConfig cfg;
  std::shared_ptr<const MeshHierarchy> hierarchy;
  std::unique_ptr<Model> model;
  std::string hierarchy_path;
};

LoadedRun load_trained_model(const std::string& run_dir, const std::string& cohort_dir,
                             const std::string& hierarchy_override, const Cohort& cohort,
                             const std::string& checkpoint_name) {
  LoadedRun out;
  out.cfg = parse_experiment_config(KeyValueConfig::from_file(run_dir + "/config.echo"));
  out.hierarchy_path =
      hierarchy_override.empty() ? default_hierarchy_path(cohort_dir) : hierarchy_override;
  out.hierarchy = ensure_hierarchy(out.hierarchy_path, cohort.template_mesh, out.cfg.factors,
                                   out.cfg.spiral_lengths);
  out.model = std::make_unique<Model>(out.cfg.model, out.hierarchy);
  load_checkpoint(out.model->parameters(), nullptr, run_dir + "/" + checkpoint_name);
  return out;
}

int cmd_generate_cohort(const std::string& config_path, const std::vector<std::string>& overrides,
                        const std::string& out_dir) {
  ExperimentConfig cfg = parse_experiment_config(load_config(config_path, overrides));
  Cohort cohort = generate_cohort(cfg.cohort);
  save_cohort(cohort, out_dir);
  write_text_file(out_dir + "/config.echo", render_experiment_config(cfg).echo());
  std::printf("cohort: %zu subjects (%.2f mean visits, %.1f%% complete) -> %s\n",
              cohort.subjects.size(), mean_observed_visits(cohort),
              100.0 * complete_sequence_fraction(cohort), out_dir.c_str());
  return 0;
}

int cmd_build_hierarchy(const std::string& config_path, const std::vector<std::string>& overrides,
                        const std::string& template_path, const std::string& out_path,
                        bool rebuild) {
  ExperimentConfig cfg = parse_experiment_config(load_config(config_path, overrides));
  TriangleMesh tmpl =
      template_path.empty() ? make_cohort_template() : load_mesh(template_path);
  auto hierarchy = ensure_hierarchy(out_path, tmpl, cfg.factors, cfg.spiral_lengths, rebuild);
  std::printf("hierarchy: %d levels (", hierarchy->n_levels());
  for (int k = 0; k < hierarchy->n_levels(); ++k)
    std::printf(k ? "/%d" : "%d", hierarchy->levels[k].mesh.n_vertices());
  std::printf(" vertices) -> %s\n", out_path.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& cohort_dir, const std::string& run_dir,
              const std::string& hierarchy_override, bool rebuild, bool normals_only) {
  ExperimentConfig cfg = parse_experiment_config(load_config(config_path, overrides));
  Cohort cohort = load_cohort(cohort_dir);
  const std::string hier_path =
      hierarchy_override.empty() ? default_hierarchy_path(cohort_dir) : hierarchy_override;
  auto hierarchy = ensure_hierarchy(hier_path, cohort.template_mesh, cfg.factors,
                                    cfg.spiral_lengths, rebuild);

  std::vector<SequenceBatch> train_batches, val_batches;
  std::vector<std::string> train_ids;
  for (const auto& subject : cohort.subjects) {
    if (normals_only && subject.spec.group != SubjectGroup::Normal) continue;
    if (subject.split == Split::Train) {
      train_batches.push_back(make_sequence_batch(subject));
      train_ids.push_back(subject.spec.id);
    } else if (subject.split == Split::Val) {
      val_batches.push_back(make_sequence_batch(subject));
    }
  }
  if (train_batches.empty()) throw ValidationError("no training subjects selected");

  Model model(cfg.model, hierarchy);
  cfg.train.out_dir = run_dir;
  fs::create_directories(run_dir);
  write_text_file(run_dir + "/config.echo", render_experiment_config(cfg).echo());
  std::string ids;
  for (const auto& id : train_ids) ids += id + "\n";
  write_text_file(run_dir + "/train_subjects.txt", ids);
  std::vector<std::pair<std::string, std::string>> inputs{
      {"cohort_manifest", cohort_dir + "/cohort.manifest"}, {"hierarchy", hier_path}};
  if (!config_path.empty()) inputs.emplace_back("config", config_path);
  write_manifest(run_dir, inputs);

  std::printf("training %s: %zu train / %zu val subjects, %d epochs, %lld parameters\n",
              cfg.variant_label.c_str(), train_batches.size(), val_batches.size(),
              cfg.train.epochs, model.parameter_count());
  TrainResult result = train(model, train_batches, val_batches, cfg.train);
  if (!result.log.empty())
    std::printf("done: train %.6f -> %.6f, best val %.6f (epoch %d)\n",
                result.log.front().train_loss, result.log.back().train_loss, result.best_val,
                result.best_epoch);
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& cohort_dir,
                 const std::string& protocol_arg, const std::string& out_dir,
                 const std::string& hierarchy_override, const std::string& checkpoint_name) {
  Cohort cohort = load_cohort(cohort_dir);
  LoadedRun run = load_trained_model(run_dir, cohort_dir, hierarchy_override, cohort,
                                     checkpoint_name);
  auto test_subjects = cohort.split_subjects(Split::Test);

  std::vector<Protocol> protocols;
  if (protocol_arg == "all")
    protocols = {Protocol::Interpolation, Protocol::Extrapolation, Protocol::Trajectory};
  else
    protocols = {parse_protocol(protocol_arg)};

  fs::create_directories(out_dir + "/metrics");
  ModelPredictor model_pred(*run.model);
  CopyReferencePredictor copy_ref;
  std::vector<ProtocolResult> all_results;
  for (Protocol protocol : protocols) {
    ProtocolResult result = run_protocol(model_pred, cohort, test_subjects, protocol);
    write_protocol_csv(result, out_dir + "/metrics/" + protocol_name(protocol) + ".csv");
    all_results.push_back(result);
    all_results.push_back(run_protocol(copy_ref, cohort, test_subjects, protocol));
    std::printf("%-13s %-15s median %.6f (x100: %.2f) mad %.6f over %d subjects, %zu skipped\n",
                protocol_name(protocol).c_str(), all_results[all_results.size() - 2].predictor.c_str(),
                result.median, result.median * 100.0, result.mad, result.n_units,
                result.skipped.size());
  }
  write_summary_csv(all_results, out_dir + "/metrics/summary.csv");

  KeyValueConfig echo = render_experiment_config(run.cfg);
  echo.set("eval_protocol", protocol_arg);
  echo.set("eval_cohort", cohort_dir);
  echo.set("eval_run", run_dir);
  echo.set("eval_checkpoint", checkpoint_name);
  write_text_file(out_dir + "/config.echo", echo.echo());
  write_manifest(out_dir, {{"cohort_manifest", cohort_dir + "/cohort.manifest"},
                           {"hierarchy", run.hierarchy_path},
                           {"checkpoint", run_dir + "/" + checkpoint_name},
                           {"run_config", run_dir + "/config.echo"}});
  return 0;
}

int cmd_anomaly(const std::string& run_dir, const std::string& cohort_dir,
                const std::string& out_dir, const std::string& hierarchy_override, int min_month,
                double ratio_threshold, const std::string& checkpoint_name) {
  Cohort cohort = load_cohort(cohort_dir);
  LoadedRun run = load_trained_model(run_dir, cohort_dir, hierarchy_override, cohort,
                                     checkpoint_name);
  std::set<std::string> train_ids = read_id_file(run_dir + "/train_subjects.txt");
  AnomalyResult result = run_anomaly(*run.model, cohort, train_ids, min_month);

  fs::create_directories(out_dir + "/metrics");
  fs::create_directories(out_dir + "/heatmaps");
  write_anomaly_csv(result, out_dir + "/metrics/anomaly.csv");

  for (const auto& subject : result.subjects) {
    const SubjectData* data = nullptr;
    for (const auto& s : cohort.subjects)
      if (s.spec.id == subject.subject_id) data = &s;
    for (const auto& visit : subject.visits) {
      TriangleMesh mesh = data->observed.at(visit.month);
      char tag[16];
      std::snprintf(tag, sizeof(tag), "%03d", visit.month);
      write_heatmap_ply(mesh, visit.vertex_error,
                        out_dir + "/heatmaps/" + subject.subject_id + "_month_" + tag + ".ply");
    }
  }

  const double localized = result.localized_fraction(ratio_threshold);
  char num[64];
  std::snprintf(num, sizeof(num), "%.17g", ratio_threshold);
  std::string summary = "n_progressors,n_skipped,ratio_threshold,localized_fraction\n";
  summary += std::to_string(result.subjects.size()) + "," +
             std::to_string(result.skipped.size()) + "," + num + ",";
  std::snprintf(num, sizeof(num), "%.17g", localized);
  summary += std::string(num) + "\n";
  write_text_file(out_dir + "/metrics/anomaly_summary.csv", summary);

  KeyValueConfig echo = render_experiment_config(run.cfg);
  echo.set("anomaly_min_month", std::to_string(min_month));
  echo.set("anomaly_cohort", cohort_dir);
  echo.set("anomaly_run", run_dir);
  write_text_file(out_dir + "/config.echo", echo.echo());
  write_manifest(out_dir, {{"cohort_manifest", cohort_dir + "/cohort.manifest"},
                           {"hierarchy", run.hierarchy_path},
                           {"checkpoint", run_dir + "/" + checkpoint_name},
                           {"train_subjects", run_dir + "/train_subjects.txt"}});

  std::printf("anomaly: %zu progressors, localized fraction %.3f at ratio >= %.2f\n",
              result.subjects.size(), localized, ratio_threshold);
  return 0;
}

int cmd_gradcheck() {
  GradCheckReport report = run_op_gradient_checks();
  for (const auto& e : report.entries)
    std::printf("%-22s max_rel_err %.3e  tol %.0e  %s\n", e.name.c_str(), e.max_rel_error,
                e.tolerance, e.pass ? "pass" : "FAIL");
  GradCheckEntry end_to_end = run_end_to_end_gradient_check();
  std::printf("%-22s max_rel_err %.3e  tol %.0e  %s\n", end_to_end.name.c_str(),
              end_to_end.max_rel_error, end_to_end.tolerance, end_to_end.pass ? "pass" : "FAIL");
  const bool ok = report.all_pass && end_to_end.pass;
  std::printf("gradcheck: %s (%.2fs per-op suite)\n", ok ? "all pass" : "FAILURES", report.seconds);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal mesh modeling experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, cohort_dir, run_dir, template_path, hierarchy_path;
  std::string protocol = "all", checkpoint_name = "best.ckpt";
  std::vector<std::string> overrides;
  bool rebuild = false, normals_only = false;
  int min_month = 24;
  double ratio_threshold = 1.5;

  auto* gen = app.add_subcommand("generate-cohort", "write a synthetic cohort archive");
  gen->add_option("--config", config_path, "key = value config file");
  gen->add_option("--set", overrides, "override key=value")->take_all();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* hier = app.add_subcommand("build-hierarchy", "precompute the template hierarchy");
  hier->add_option("--config", config_path, "key = value config file");
  hier->add_option("--set", overrides, "override key=value")->take_all();
  hier->add_option("--template", template_path, "template mesh (.obj/.ply); built-in if omitted");
  hier->add_option("--out", out_dir, "output cache file")->required();
  hier->add_flag("--rebuild-hierarchy", rebuild, "ignore any existing cache");

  auto* tr = app.add_subcommand("train", "train a model on a cohort");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--set", overrides, "override key=value")->take_all();
  tr->add_option("--cohort", cohort_dir, "cohort directory")->required();
  tr->add_option("--out", run_dir, "run directory")->required();
  tr->add_option("--hierarchy", hierarchy_path, "hierarchy cache path");
  tr->add_flag("--rebuild-hierarchy", rebuild, "force hierarchy recomputation");
  tr->add_flag("--normals-only", normals_only, "train only on normal-group subjects");

  auto* ev = app.add_subcommand("evaluate", "run the evaluation protocols on the test split");
  ev->add_option("--run", run_dir, "training run directory")->required();
  ev->add_option("--cohort", cohort_dir, "cohort directory")->required();
  ev->add_option("--protocol", protocol, "interpolation|extrapolation|trajectory|all");
  ev->add_option("--out", out_dir, "results directory")->required();
  ev->add_option("--hierarchy", hierarchy_path, "hierarchy cache path");
  ev->add_option("--checkpoint", checkpoint_name, "checkpoint file name in the run directory");

  auto* an = app.add_subcommand("anomaly", "reconstruction-error heatmaps on progressors");
  an->add_option("--run", run_dir, "training run directory (normals-only manifest)")->required();
  an->add_option("--cohort", cohort_dir, "cohort directory")->required();
  an->add_option("--out", out_dir, "results directory")->required();
  an->add_option("--hierarchy", hierarchy_path, "hierarchy cache path");
  an->add_option("--min-month", min_month, "first evaluated month");
  an->add_option("--ratio-threshold", ratio_threshold, "inside/outside localization threshold");
  an->add_option("--checkpoint", checkpoint_name, "checkpoint file name in the run directory");

  app.add_subcommand("gradcheck", "finite-difference checks for every op and the full loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_cohort(config_path, overrides, out_dir);
    if (hier->parsed())
      return cmd_build_hierarchy(config_path, overrides, template_path, out_dir, rebuild);
    if (tr->parsed())
      return cmd_train(config_path, overrides, cohort_dir, run_dir, hierarchy_path, rebuild,
                       normals_only);
    if (ev->parsed())
      return cmd_evaluate(run_dir, cohort_dir, protocol, out_dir, hierarchy_path,
                          checkpoint_name);
    if (an->parsed())
      return cmd_anomaly(run_dir, cohort_dir, out_dir, hierarchy_path, min_month,
                         ratio_threshold, checkpoint_name);
    return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
