// Single entry point exposing the pipeline as subcommands. Every run writes
// its effective configuration into the run directory so results can be
// audited and reproduced.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "egopair/egopair.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path resolve_run_dir(const std::string& out_dir, const std::string& command) {
  if (!out_dir.empty()) return fs::path(out_dir);
  return fs::path("runs") / (command + "-" + utc_stamp());
}

void freeze_config(const fs::path& run_dir, const json& effective) {
  egopair::detail::write_text_file(run_dir / "config.json", effective.dump(2) + "\n");
}

egopair::TemplateSet load_templates(const std::string& dir) {
  if (dir.empty()) return {};
  return egopair::TemplateSet::load_dir(dir);
}

struct BackendHandle {
  std::map<std::string, std::unique_ptr<egopair::ModelBackend>> roster;

  egopair::ModelBackend& get(const std::string& id) {
    auto it = roster.find(id);
    if (it == roster.end()) {
      throw egopair::Error("unknown backend \"" + id +
                           "\" (not built-in and not in the roster file)");
    }
    return *it->second;
  }
};

int cmd_validate(const std::string& manifest, bool check_files) {
  egopair::Corpus corpus;
  try {
    corpus = egopair::load_manifest(manifest);
  } catch (const egopair::Error& e) {
    std::cerr << "invalid manifest: " << e.what() << "\n";
    return 1;
  }
  const auto report = egopair::validate_corpus(corpus, check_files);
  if (!report.ok()) {
    for (const auto& v : report.violations) {
      std::cerr << "trajectory " << v.trajectory_id << " " << v.field << ": "
                << v.detail << "\n";
    }
    return 1;
  }
  std::cout << "ok: " << corpus.trajectories.size() << " trajectories\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"egopair: ego-centric frame-pair dataset builder and dual-level "
               "evaluation harness"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI-style key=value file");

  // ---- validate ----
  std::string v_manifest;
  bool v_check_files = false;
  auto* validate = app.add_subcommand("validate", "check a corpus manifest");
  validate->add_option("manifest", v_manifest, "manifest file")->required();
  validate->add_flag("--check-files", v_check_files, "also check frame files exist");

  // ---- build ----
  std::string b_manifest, b_stage, b_out, b_annotator, b_backends, b_templates;
  std::uint64_t b_seed = 0;
  int b_factor = 10, b_quota_bin = 4, b_quota_window = 4;
  auto* build = app.add_subcommand("build", "build a curriculum stage dataset");
  build->add_option("--manifest", b_manifest, "corpus manifest")->required();
  build->add_option("--stage", b_stage, "cot | tag | long")->required();
  build->add_option("--out-dir", b_out, "run directory (default runs/<stamp>)");
  build->add_option("--seed", b_seed, "sampling seed")->capture_default_str();
  build->add_option("--factor", b_factor, "temporal downsampling factor")
      ->capture_default_str();
  build->add_option("--quota-per-bin", b_quota_bin, "short pairs per interval bin")
      ->capture_default_str();
  build->add_option("--quota-per-window", b_quota_window, "long pairs per window")
      ->capture_default_str();
  build->add_option("--annotator", b_annotator, "backend id for cot reasoning paths");
  build->add_option("--backends", b_backends, "backend roster JSON file");
  build->add_option("--templates", b_templates, "prompt template directory");

  // ---- eval ----
  std::string e_dataset, e_backend, e_out, e_backends, e_templates, e_weighting = "macro";
  std::string e_replay;
  std::uint64_t e_seed = 0;
  int e_parallelism = 4;
  auto* eval = app.add_subcommand("eval", "evaluate a backend on a dataset file");
  eval->add_option("--dataset", e_dataset, "samples JSONL file")->required();
  eval->add_option("--backend", e_backend, "backend id")->required();
  eval->add_option("--out-dir", e_out, "run directory (default runs/<stamp>)");
  eval->add_option("--backends", e_backends, "backend roster JSON file");
  eval->add_option("--parallelism", e_parallelism, "remote query fan-out")
      ->capture_default_str();
  eval->add_option("--seed", e_seed, "seed for built-in policy backends")
      ->capture_default_str();
  eval->add_option("--weighting", e_weighting, "macro | sample_weighted")
      ->capture_default_str();
  eval->add_option("--templates", e_templates, "prompt template directory");
  eval->add_option("--replay-transcript", e_replay,
                   "re-score a saved transcript instead of querying");

  // ---- report ----
  std::string r_run_dir, r_format = "both";
  auto* report_cmd = app.add_subcommand("report", "render reports from eval outputs");
  report_cmd->add_option("--run-dir", r_run_dir, "run directory with eval_* subdirs")
      ->required();
  report_cmd->add_option("--format", r_format, "csv | markdown | both")
      ->capture_default_str();

  // ---- curve ----
  std::string c_manifest, c_trajectory, c_backend, c_out, c_backends, c_templates;
  std::uint64_t c_seed = 0;
  int c_stride = 5, c_anchors = 8;
  auto* curve = app.add_subcommand("curve", "task-completion curve for a trajectory");
  curve->add_option("--manifest", c_manifest, "corpus manifest")->required();
  curve->add_option("--trajectory", c_trajectory, "trajectory id")->required();
  curve->add_option("--backend", c_backend, "backend id")->required();
  curve->add_option("--out-dir", c_out, "run directory (default runs/<stamp>)");
  curve->add_option("--stride", c_stride, "probe stride in frames")->capture_default_str();
  curve->add_option("--anchors", c_anchors, "number of anchor frames")
      ->capture_default_str();
  curve->add_option("--seed", c_seed, "anchor sampling seed")->capture_default_str();
  curve->add_option("--backends", c_backends, "backend roster JSON file");
  curve->add_option("--templates", c_templates, "prompt template directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*validate) {
      return cmd_validate(v_manifest, v_check_files);
    }

    if (*build) {
      const egopair::Stage stage = egopair::stage_from_string(b_stage);
      const fs::path run_dir = resolve_run_dir(b_out, "build");
      fs::create_directories(run_dir);
      BackendHandle backends;
      backends.roster = egopair::load_backends(
          b_backends.empty() ? fs::path{} : fs::path(b_backends), b_seed);

      egopair::BuildConfig config;
      config.out_dir = run_dir;
      config.downsample_factor = b_factor;
      config.quota_per_bin = b_quota_bin;
      config.quota_per_window = b_quota_window;
      config.templates = load_templates(b_templates);
      if (!b_annotator.empty()) config.annotator = &backends.get(b_annotator);

      freeze_config(run_dir, json{{"command", "build"},
                                  {"manifest", b_manifest},
                                  {"stage", b_stage},
                                  {"seed", b_seed},
                                  {"factor", b_factor},
                                  {"quota_per_bin", b_quota_bin},
                                  {"quota_per_window", b_quota_window},
                                  {"annotator", b_annotator},
                                  {"backends", b_backends},
                                  {"templates", b_templates}});

      const egopair::Corpus corpus = egopair::load_manifest(b_manifest);
      const egopair::BuildReport report =
          egopair::build_stage(corpus, stage, config, b_seed);
      egopair::detail::write_text_file(
          run_dir / (b_stage + ".build_report.json"), report.to_json().dump(2) + "\n");
      std::cout << "built " << report.samples << " samples ("
                << report.base_pairs << " base pairs, " << report.dropped_pairs
                << " dropped) -> " << report.samples_file.string() << "\n";
      return 0;
    }

    if (*eval) {
      const fs::path run_dir = resolve_run_dir(e_out, "eval");
      const fs::path eval_dir = run_dir / ("eval_" + e_backend);
      fs::create_directories(eval_dir);
      const egopair::Weighting weighting = egopair::weighting_from_string(e_weighting);
      const egopair::TemplateSet templates = load_templates(e_templates);

      freeze_config(run_dir, json{{"command", "eval"},
                                  {"dataset", e_dataset},
                                  {"backend", e_backend},
                                  {"seed", e_seed},
                                  {"parallelism", e_parallelism},
                                  {"weighting", e_weighting},
                                  {"backends", e_backends},
                                  {"templates", e_templates},
                                  {"replay_transcript", e_replay}});

      std::vector<egopair::RawResult> results;
      if (!e_replay.empty()) {
        results = egopair::rescore_from_transcript(e_dataset, e_replay);
      } else {
        BackendHandle backends;
        backends.roster = egopair::load_backends(
            e_backends.empty() ? fs::path{} : fs::path(e_backends), e_seed);
        egopair::ModelBackend& backend = backends.get(e_backend);
        egopair::TranscriptWriter transcript(eval_dir / "transcript.jsonl");
        egopair::EvalOptions options;
        options.parallelism = e_parallelism;
        options.transcript = &transcript;
        options.templates = &templates;
        results = egopair::run_eval(e_dataset, backend, options);
      }
      const egopair::MetricsReport metrics =
          egopair::compute_metrics(results, weighting, e_backend);
      egopair::detail::write_text_file(eval_dir / "metrics.json",
                                       metrics.to_json().dump(2) + "\n");
      std::cout << "evaluated " << metrics.total << " samples: overall "
                << egopair::detail::format_fixed1(metrics.overall_accuracy)
                << "%, long avg "
                << egopair::detail::format_fixed1(metrics.long_avg) << "%, gap "
                << egopair::detail::format_fixed1(metrics.bias_gap) << "\n";
      return 0;
    }

    if (*report_cmd) {
      const fs::path run_dir(r_run_dir);
      std::map<std::string, egopair::MetricsReport> reports;
      for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("eval_", 0) != 0) continue;
        const fs::path metrics_file = entry.path() / "metrics.json";
        if (!fs::exists(metrics_file)) continue;
        const auto metrics = egopair::MetricsReport::from_json(
            json::parse(egopair::detail::read_text_file(metrics_file)));
        reports[metrics.backend_id] = metrics;
      }
      if (reports.empty()) {
        throw egopair::Error("no eval_*/metrics.json under " + run_dir.string());
      }
      if (r_format == "csv" || r_format == "both") {
        egopair::detail::write_text_file(run_dir / "report.csv",
                                         egopair::render_report_csv(reports));
        std::cout << (run_dir / "report.csv").string() << "\n";
      }
      if (r_format == "markdown" || r_format == "both") {
        egopair::detail::write_text_file(run_dir / "report.md",
                                         egopair::render_report_markdown(reports));
        std::cout << (run_dir / "report.md").string() << "\n";
      }
      if (r_format != "csv" && r_format != "markdown" && r_format != "both") {
        throw egopair::Error("unknown report format \"" + r_format + "\"");
      }
      return 0;
    }

    if (*curve) {
      const fs::path run_dir = resolve_run_dir(c_out, "curve");
      fs::create_directories(run_dir);
      const egopair::Corpus corpus = egopair::load_manifest(c_manifest);
      const egopair::Trajectory* trajectory = corpus.find(c_trajectory);
      if (!trajectory) {
        throw egopair::Error("trajectory \"" + c_trajectory + "\" not in manifest");
      }
      const egopair::PlannedSkeleton skeleton =
          egopair::decompose_from_metadata(*trajectory);
      BackendHandle backends;
      backends.roster = egopair::load_backends(
          c_backends.empty() ? fs::path{} : fs::path(c_backends), c_seed);
      const egopair::TemplateSet templates = load_templates(c_templates);

      freeze_config(run_dir, json{{"command", "curve"},
                                  {"manifest", c_manifest},
                                  {"trajectory", c_trajectory},
                                  {"backend", c_backend},
                                  {"stride", c_stride},
                                  {"anchors", c_anchors},
                                  {"seed", c_seed},
                                  {"backends", c_backends},
                                  {"templates", c_templates}});

      egopair::CurveOptions options;
      options.stride = c_stride;
      options.n_anchors = c_anchors;
      options.seed = c_seed;
      options.templates = &templates;
      const egopair::CompletionCurve result = egopair::completion_curve(
          *trajectory, skeleton, backends.get(c_backend), options);
      const fs::path out_file = run_dir / ("curve_" + c_trajectory + ".csv");
      egopair::detail::write_text_file(out_file, egopair::curve_to_csv(result));
      std::cout << out_file.string() << "\n";
      return 0;
    }
  } catch (const egopair::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
