// Dual-level evaluation: runs bidirectional frame-pair queries against a
// backend, scores verdicts, aggregates per-bin and per-window accuracies
// with the chronological-bias gap, renders CSV/markdown reports, and
// estimates task-completion curves via an anchor tournament.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "egopair/builder.hpp"
#include "egopair/corpus.hpp"
#include "egopair/detail/hash.hpp"
#include "egopair/detail/jsonl.hpp"
#include "egopair/detail/sha256.hpp"
#include "egopair/detail/text.hpp"
#include "egopair/errors.hpp"
#include "egopair/modelgw.hpp"
#include "egopair/planner.hpp"
#include "egopair/promptkit.hpp"
#include "egopair/sampling.hpp"
#include "egopair/types.hpp"

namespace egopair {

// ---- raw results -----------------------------------------------------------

struct RawResult {
  std::string sample_id;
  std::optional<Pick> verdict;  // nullopt = unparseable (or transport failure)
  bool weak_match = false;
  bool correct = false;
  bool transport_failed = false;
  Direction direction = Direction::forward;
  bool short_level = true;
  std::string bin_or_window;
};

inline RawResult score_sample(const DatasetSample& sample, const std::string& response) {
  RawResult r;
  r.sample_id = sample.id;
  r.direction = sample.pair.direction;
  r.short_level = is_short(sample.pair.level);
  r.bin_or_window = std::string(bin_or_window_label(sample.pair.level));
  const Verdict v = parse_verdict(response);
  r.verdict = v.choice;
  r.weak_match = v.weak_match;
  r.correct = v.choice.has_value() && *v.choice == sample.pair.y_gt;
  return r;
}

inline RawResult failed_result(const DatasetSample& sample) {
  RawResult r;
  r.sample_id = sample.id;
  r.direction = sample.pair.direction;
  r.short_level = is_short(sample.pair.level);
  r.bin_or_window = std::string(bin_or_window_label(sample.pair.level));
  r.transport_failed = true;
  return r;
}

// ---- dataset loading ---------------------------------------------------------

inline std::vector<DatasetSample> load_dataset(const std::filesystem::path& path) {
  std::vector<DatasetSample> samples;
  detail::for_each_jsonl(path, [&](std::size_t, const nlohmann::json& j) {
    samples.push_back(sample_from_json(j));
  });
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) {
      throw DatasetError("duplicate sample id \"" + s.id + "\" in " + path.string());
    }
  }
  return samples;
}

inline PromptText prompt_for_sample(const DatasetSample& sample,
                                    const TemplateSet& templates) {
  if (is_short(sample.pair.level)) {
    return render_short_prompt(sample.pair.task_name, templates);
  }
  if (sample.context.kind != Context::Kind::skeleton || sample.context.subtasks.empty()) {
    throw DatasetError("long-level sample \"" + sample.id +
                       "\" carries no skeleton context");
  }
  return render_long_prompt(sample.pair.task_name, sample.context.subtasks, templates);
}

// ---- evaluation run ------------------------------------------------------------

struct EvalOptions {
  int parallelism = 1;
  double abort_failure_fraction = 0.20;
  TranscriptWriter* transcript = nullptr;
  const TemplateSet* templates = nullptr;
};

// Queries every sample exactly once. Policy backends run sequentially so a
// seed fully determines the transcript; remote backends fan out up to the
// configured parallelism and results are still keyed by sample order. A
// failed query scores as incorrect and flagged; the run aborts only past
// the configured transport-failure fraction.
inline std::vector<RawResult> run_eval(const std::filesystem::path& dataset_path,
                                       ModelBackend& backend,
                                       const EvalOptions& options = {}) {
  static const TemplateSet default_templates;
  const TemplateSet& templates =
      options.templates ? *options.templates : default_templates;
  const std::vector<DatasetSample> samples = load_dataset(dataset_path);
  if (samples.empty()) throw DatasetError("dataset is empty: " + dataset_path.string());

  std::vector<RawResult> results(samples.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  const std::size_t max_failures = static_cast<std::size_t>(
      options.abort_failure_fraction * static_cast<double>(samples.size()));
  std::atomic<bool> aborted{false};

  auto worker = [&]() {
    while (!aborted.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= samples.size()) return;
      const DatasetSample& sample = samples[i];
      const PromptText prompt = prompt_for_sample(sample, templates);
      QueryContext ctx;
      ctx.index = i;
      ctx.oracle_hint = sample.pair.y_gt;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const std::string response = backend.query(
            {sample.pair.img1.path.string(), sample.pair.img2.path.string()}, prompt,
            ctx);
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        if (options.transcript) {
          TranscriptEntry entry;
          entry.sample_id = sample.id;
          entry.backend_id = backend.id();
          entry.prompt_sha256 = detail::sha256_hex(prompt.text);
          entry.response = response;
          // Wall-clock fields stay zero for policies so reruns are
          // byte-identical.
          entry.latency_ms = backend.is_policy() ? 0 : elapsed;
          entry.ts = backend.is_policy() ? 0 : static_cast<std::int64_t>(std::time(nullptr));
          options.transcript->append(entry);
        }
        results[i] = score_sample(sample, response);
      } catch (const BackendError&) {
        results[i] = failed_result(sample);
        if (failures.fetch_add(1) + 1 > max_failures) aborted.store(true);
      }
    }
  };

  const int parallelism =
      backend.is_policy()
          ? 1
          : std::max(1, std::min(options.parallelism, backend.parallelism()));
  if (parallelism == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(parallelism));
    for (int i = 0; i < parallelism; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (aborted.load()) {
    throw EvalAborted("aborted: " + std::to_string(failures.load()) + " of " +
                      std::to_string(samples.size()) +
                      " queries failed at the transport level");
  }
  return results;
}

// Re-scores a saved transcript against the dataset without any backend
// queries. Samples missing from the transcript score as failed.
inline std::vector<RawResult> rescore_from_transcript(
    const std::filesystem::path& dataset_path,
    const std::filesystem::path& transcript_path) {
  const std::vector<DatasetSample> samples = load_dataset(dataset_path);
  std::unordered_map<std::string, std::string> responses;
  for (const auto& e : read_transcript(transcript_path)) {
    responses[e.sample_id] = e.response;  // at-most-once: last entry wins
  }
  std::vector<RawResult> results;
  results.reserve(samples.size());
  for (const auto& sample : samples) {
    auto it = responses.find(sample.id);
    if (it == responses.end()) {
      results.push_back(failed_result(sample));
    } else {
      results.push_back(score_sample(sample, it->second));
    }
  }
  return results;
}

// ---- metric arithmetic ------------------------------------------------------------

inline double macro_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

inline double bidirectional_average(double acc_fwd, double acc_inv) {
  return (acc_fwd + acc_inv) / 2.0;
}

inline double chronological_gap(double acc_fwd, double acc_inv) {
  return std::abs(acc_fwd - acc_inv);
}

enum class Weighting { macro, sample_weighted };

inline std::string_view to_string(Weighting w) {
  return w == Weighting::macro ? "macro" : "sample_weighted";
}

inline Weighting weighting_from_string(std::string_view s) {
  if (s == "macro") return Weighting::macro;
  if (s == "sample_weighted") return Weighting::sample_weighted;
  throw SchemaError("weighting", "expected macro or sample_weighted");
}

struct Cell {
  std::size_t n = 0;
  std::size_t correct = 0;

  double accuracy() const {
    return n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(n);
  }
};

struct MetricsReport {
  std::string backend_id;
  Weighting weighting = Weighting::macro;
  std::map<std::string, Cell> short_bins;  // keys "5".."12+"
  double short_avg = 0.0;
  std::map<std::string, Cell> long_cells;  // keys fwd_S..inv_L
  double long_fwd_avg = 0.0;
  double long_inv_avg = 0.0;
  double long_avg = 0.0;
  double bias_gap = 0.0;
  double parse_error_rate = 0.0;
  double transport_failure_rate = 0.0;
  std::size_t total = 0;
  std::size_t total_correct = 0;
  double overall_accuracy = 0.0;

  bool has_short() const {
    for (const auto& [_, c] : short_bins) {
      if (c.n > 0) return true;
    }
    return false;
  }
  bool has_long() const {
    for (const auto& [_, c] : long_cells) {
      if (c.n > 0) return true;
    }
    return false;
  }

  nlohmann::json to_json() const {
    auto cells_json = [](const std::map<std::string, Cell>& cells) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [k, c] : cells) {
        j[k] = {{"n", c.n}, {"correct", c.correct}, {"accuracy", c.accuracy()}};
      }
      return j;
    };
    return {{"backend_id", backend_id},
            {"weighting", std::string(to_string(weighting))},
            {"short_bins", cells_json(short_bins)},
            {"short_avg", short_avg},
            {"long_cells", cells_json(long_cells)},
            {"long_fwd_avg", long_fwd_avg},
            {"long_inv_avg", long_inv_avg},
            {"long_avg", long_avg},
            {"bias_gap", bias_gap},
            {"parse_error_rate", parse_error_rate},
            {"transport_failure_rate", transport_failure_rate},
            {"total", total},
            {"total_correct", total_correct},
            {"overall_accuracy", overall_accuracy}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.backend_id = j.at("backend_id").get<std::string>();
    r.weighting = weighting_from_string(j.at("weighting").get<std::string>());
    auto load_cells = [](const nlohmann::json& jc, std::map<std::string, Cell>& out) {
      for (auto it = jc.begin(); it != jc.end(); ++it) {
        out[it.key()] = {it.value().at("n").get<std::size_t>(),
                         it.value().at("correct").get<std::size_t>()};
      }
    };
    load_cells(j.at("short_bins"), r.short_bins);
    load_cells(j.at("long_cells"), r.long_cells);
    r.short_avg = j.at("short_avg").get<double>();
    r.long_fwd_avg = j.at("long_fwd_avg").get<double>();
    r.long_inv_avg = j.at("long_inv_avg").get<double>();
    r.long_avg = j.at("long_avg").get<double>();
    r.bias_gap = j.at("bias_gap").get<double>();
    r.parse_error_rate = j.at("parse_error_rate").get<double>();
    r.transport_failure_rate = j.at("transport_failure_rate").get<double>();
    r.total = j.at("total").get<std::size_t>();
    r.total_correct = j.at("total_correct").get<std::size_t>();
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    return r;
  }
};

namespace detail_eval {

inline std::string long_cell_key(Direction d, std::string_view window) {
  return std::string(d == Direction::forward ? "fwd_" : "inv_") + std::string(window);
}

inline double average_cells(const std::map<std::string, Cell>& cells,
                            std::span<const std::string> keys, Weighting weighting) {
  std::vector<double> accs;
  std::size_t n = 0;
  std::size_t correct = 0;
  for (const auto& key : keys) {
    auto it = cells.find(key);
    if (it == cells.end() || it->second.n == 0) continue;  // empty cells excluded
    accs.push_back(it->second.accuracy());
    n += it->second.n;
    correct += it->second.correct;
  }
  if (accs.empty()) return 0.0;
  if (weighting == Weighting::macro) return macro_mean(accs);
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace detail_eval

inline const std::vector<std::string>& short_bin_keys() {
  static const std::vector<std::string> keys = {"5", "6",  "7",  "8",
                                                "9", "10", "11", "12+"};
  return keys;
}

inline const std::vector<std::string>& long_cell_keys() {
  static const std::vector<std::string> keys = {"fwd_S", "fwd_M", "fwd_L",
                                                "inv_S", "inv_M", "inv_L"};
  return keys;
}

// Aggregation is a deterministic fold over results sorted by sample_id, so
// metrics do not depend on scheduling order.
inline MetricsReport compute_metrics(std::vector<RawResult> results,
                                     Weighting weighting = Weighting::macro,
                                     std::string backend_id = {}) {
  if (results.empty()) throw EmptyResults();
  std::sort(results.begin(), results.end(),
            [](const RawResult& a, const RawResult& b) { return a.sample_id < b.sample_id; });

  MetricsReport report;
  report.backend_id = std::move(backend_id);
  report.weighting = weighting;
  std::size_t parse_errors = 0;
  std::size_t transport_failures = 0;
  for (const auto& r : results) {
    Cell& cell = r.short_level
                     ? report.short_bins[r.bin_or_window]
                     : report.long_cells[detail_eval::long_cell_key(r.direction,
                                                                    r.bin_or_window)];
    cell.n += 1;
    cell.correct += r.correct ? 1 : 0;
    report.total += 1;
    report.total_correct += r.correct ? 1 : 0;
    if (r.transport_failed) {
      ++transport_failures;
    } else if (!r.verdict.has_value()) {
      ++parse_errors;
    }
  }

  report.short_avg =
      detail_eval::average_cells(report.short_bins, short_bin_keys(), weighting);
  const std::vector<std::string> fwd_keys = {"fwd_S", "fwd_M", "fwd_L"};
  const std::vector<std::string> inv_keys = {"inv_S", "inv_M", "inv_L"};
  report.long_fwd_avg = detail_eval::average_cells(report.long_cells, fwd_keys, weighting);
  report.long_inv_avg = detail_eval::average_cells(report.long_cells, inv_keys, weighting);
  report.long_avg =
      detail_eval::average_cells(report.long_cells, long_cell_keys(), weighting);
  report.bias_gap = chronological_gap(report.long_fwd_avg, report.long_inv_avg);
  report.parse_error_rate =
      100.0 * static_cast<double>(parse_errors) / static_cast<double>(report.total);
  report.transport_failure_rate = 100.0 * static_cast<double>(transport_failures) /
                                  static_cast<double>(report.total);
  report.overall_accuracy = 100.0 * static_cast<double>(report.total_correct) /
                            static_cast<double>(report.total);
  return report;
}

// ---- report rendering ----------------------------------------------------------------

namespace detail_eval {

inline std::string cell_text(const std::map<std::string, Cell>& cells,
                             const std::string& key) {
  auto it = cells.find(key);
  if (it == cells.end() || it->second.n == 0) return "-";
  return detail::format_fixed1(it->second.accuracy());
}

inline std::vector<std::string> report_row(const MetricsReport& r) {
  std::vector<std::string> row;
  row.push_back(r.backend_id);
  for (const auto& key : short_bin_keys()) row.push_back(cell_text(r.short_bins, key));
  row.push_back(r.has_short() ? detail::format_fixed1(r.short_avg) : "-");
  for (const auto& key : long_cell_keys()) row.push_back(cell_text(r.long_cells, key));
  row.push_back(r.has_long() ? detail::format_fixed1(r.long_avg) : "-");
  row.push_back(r.has_long() ? detail::format_fixed1(r.bias_gap) : "-");
  row.push_back(detail::format_fixed1(r.parse_error_rate));
  return row;
}

inline const std::vector<std::string>& report_header() {
  static const std::vector<std::string> header = {
      "backend", "5",     "6",     "7",     "8",     "9",        "10",
      "11",      "12+",   "short_avg", "fwd_S", "fwd_M", "fwd_L", "inv_S",
      "inv_M",   "inv_L", "long_avg",  "gap",   "parse_err"};
  return header;
}

}  // namespace detail_eval

// One row per backend, sorted by backend id; 1-decimal fixed formatting;
// byte-stable for identical reports.
inline std::string render_report_csv(const std::map<std::string, MetricsReport>& reports) {
  std::string out = detail::join(detail_eval::report_header(), ",") + "\n";
  for (const auto& [_, report] : reports) {
    out += detail::join(detail_eval::report_row(report), ",") + "\n";
  }
  return out;
}

inline std::string render_report_markdown(
    const std::map<std::string, MetricsReport>& reports) {
  const auto& header = detail_eval::report_header();
  std::string out = "| " + detail::join(header, " | ") + " |\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += " --- |";
  out += "\n";
  for (const auto& [_, report] : reports) {
    out += "| " + detail::join(detail_eval::report_row(report), " | ") + " |\n";
  }
  return out;
}

// ---- task-completion curves -------------------------------------------------------------

struct CompletionCurve {
  std::vector<std::pair<int, double>> points;  // (frame_index, progress in [0,1])
  std::string method;
};

struct CurveOptions {
  int stride = 1;
  int n_anchors = 8;
  std::uint64_t seed = 0;
  double abort_failure_fraction = 0.20;
  const TemplateSet* templates = nullptr;
};

// Anchor tournament: progress of a probe frame is the fraction of seeded
// anchor frames the backend judges the probe to beat in a pairwise
// "closer to completion" query (anchor as img1, probe as img2). Uses only
// the pairwise primitive, so any backend the harness can evaluate can also
// produce a curve.
inline CompletionCurve completion_curve(const Trajectory& t,
                                        const PlannedSkeleton& skeleton,
                                        ModelBackend& backend,
                                        const CurveOptions& options = {}) {
  if (options.stride < 1) throw Error("curve stride must be >= 1");
  if (options.n_anchors < 1) throw Error("curve n_anchors must be >= 1");
  const int total = static_cast<int>(t.frames.size());
  if (total <= options.n_anchors) {
    throw Error("trajectory \"" + t.id + "\" too short for " +
                std::to_string(options.n_anchors) + " anchors");
  }
  static const TemplateSet default_templates;
  const TemplateSet& templates =
      options.templates ? *options.templates : default_templates;

  std::vector<int> all_indices(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) all_indices[static_cast<std::size_t>(i)] = i;
  detail::CounterRng rng(options.seed, "anchors|" + t.id);
  std::vector<int> anchors = detail_sampling::draw_without_replacement(
      std::move(all_indices), static_cast<std::size_t>(options.n_anchors), rng);
  std::sort(anchors.begin(), anchors.end());

  std::vector<int> probes;
  for (int i = 0; i < total; i += options.stride) probes.push_back(i);
  if (probes.back() != total - 1) probes.push_back(total - 1);

  const PromptText prompt =
      render_long_prompt(t.task_name, skeleton.labels, templates);
  CompletionCurve curve;
  curve.method = "anchor-tournament(n_anchors=" + std::to_string(options.n_anchors) +
                 ",stride=" + std::to_string(options.stride) +
                 ",seed=" + std::to_string(options.seed) + ")";
  std::size_t failures = 0;
  const std::size_t max_failures = static_cast<std::size_t>(
      options.abort_failure_fraction *
      static_cast<double>(probes.size() * anchors.size()));
  std::uint64_t query_index = 0;
  for (int probe : probes) {
    int wins = 0;
    for (int anchor : anchors) {
      QueryContext ctx;
      ctx.index = query_index++;
      // Ties go to the probe so that the final frame reaches progress 1.0
      // even when it is itself an anchor.
      ctx.oracle_hint = probe >= anchor ? Pick::img2 : Pick::img1;
      try {
        const std::string response = backend.query(
            {t.frames[static_cast<std::size_t>(anchor)].path.string(),
             t.frames[static_cast<std::size_t>(probe)].path.string()},
            prompt, ctx);
        const Verdict v = parse_verdict(response);
        if (v.choice && *v.choice == Pick::img2) ++wins;
      } catch (const BackendError& e) {
        if (++failures > max_failures) {
          throw EvalAborted(std::string("curve aborted: ") + e.what());
        }
      }
    }
    curve.points.push_back(
        {probe, static_cast<double>(wins) / static_cast<double>(anchors.size())});
  }
  return curve;
}

inline std::string curve_to_csv(const CompletionCurve& curve) {
  std::string out = "# method: " + curve.method + "\n";
  out += "frame_index,progress\n";
  for (const auto& [frame, progress] : curve.points) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%d,%.6f\n", frame, progress);
    out += buf;
  }
  return out;
}

}  // namespace egopair
