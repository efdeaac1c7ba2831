#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "egopair/detail/text.hpp"
#include "egopair/evalharness.hpp"
#include "test_helpers.hpp"

using namespace egopair;
using egotest::ScriptedBackend;
using egotest::TempDir;

namespace {

// A swap-closed long-level dataset built from a synthetic skeleton corpus.
BuildReport build_long_dataset(const TempDir& dir, int quota_per_window = 20,
                               std::uint64_t seed = 5) {
  Corpus corpus = egotest::make_corpus({egotest::make_trajectory("t0", 240, 5),
                                        egotest::make_trajectory("t1", 200, 4)});
  BuildConfig config;
  config.out_dir = dir.path();
  config.downsample_factor = 1;
  config.quota_per_window = quota_per_window;
  return build_stage(corpus, Stage::long_horizon, config, seed);
}

BuildReport build_tag_dataset(const TempDir& dir, int quota_per_bin = 10,
                              std::uint64_t seed = 5) {
  Corpus corpus = egotest::make_corpus({egotest::make_trajectory("t0", 300, 3)});
  BuildConfig config;
  config.out_dir = dir.path();
  config.downsample_factor = 1;
  config.quota_per_bin = quota_per_bin;
  return build_stage(corpus, Stage::tag, config, seed);
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("metric arithmetic: gap and bidirectional average") {
  CHECK(chronological_gap(91.7, 2.2) == doctest::Approx(89.5).epsilon(1e-12));
  CHECK(bidirectional_average(91.7, 2.2) == doctest::Approx(46.95).epsilon(1e-12));
  CHECK(std::abs(bidirectional_average(91.7, 2.2) - 46.9) <= 0.1);

  // Gap identity properties.
  detail::CounterRng rng(3, "gap");
  for (int i = 0; i < 200; ++i) {
    const double x = 100.0 * rng.next_unit();
    const double y = 100.0 * rng.next_unit();
    CHECK(chronological_gap(x, x) == 0.0);
    CHECK(chronological_gap(x, y) == chronological_gap(y, x));
    CHECK(chronological_gap(x, y) >= 0.0);
    CHECK(chronological_gap(x, y) <= 100.0);
  }
}

TEST_CASE("metric arithmetic: macro means of reference rows") {
  const std::vector<double> long_cells = {88.2, 92.9, 96.2, 92.0, 92.7, 92.3};
  CHECK(std::abs(macro_mean(long_cells) - 92.4) <= 0.05);
  const std::vector<double> short_cells = {80.8, 86.3, 89.7, 88.8,
                                           89.8, 87.2, 89.0, 88.2};
  CHECK(std::abs(macro_mean(short_cells) - 87.5) <= 0.05);
}

TEST_CASE("compute_metrics: all cells equal gives avg a and gap 0") {
  std::vector<RawResult> results;
  int id = 0;
  for (Direction d : {Direction::forward, Direction::inverse}) {
    for (const char* window : {"S", "M", "L"}) {
      for (int i = 0; i < 10; ++i) {
        RawResult r;
        r.sample_id = "s" + std::to_string(id++);
        r.direction = d;
        r.short_level = false;
        r.bin_or_window = window;
        r.correct = i < 7;  // every cell at 70%
        r.verdict = Pick::img1;
        results.push_back(r);
      }
    }
  }
  const MetricsReport report = compute_metrics(results, Weighting::macro);
  CHECK(report.long_avg == doctest::Approx(70.0));
  CHECK(report.long_fwd_avg == doctest::Approx(70.0));
  CHECK(report.bias_gap == doctest::Approx(0.0));
  CHECK(report.total == 60);
  CHECK_FALSE(report.has_short());

  CHECK_THROWS_AS(compute_metrics({}), EmptyResults);
}

TEST_CASE("compute_metrics excludes empty cells and supports both weightings") {
  std::vector<RawResult> results;
  auto add = [&](const std::string& window, Direction d, int n, int correct) {
    for (int i = 0; i < n; ++i) {
      RawResult r;
      r.sample_id = window + std::string(to_string(d)) + std::to_string(i);
      r.direction = d;
      r.short_level = false;
      r.bin_or_window = window;
      r.correct = i < correct;
      r.verdict = Pick::img2;
      results.push_back(r);
    }
  };
  add("S", Direction::forward, 10, 9);  // 90%
  add("M", Direction::forward, 30, 15);  // 50%
  // L forward empty; inverse entirely empty.
  const MetricsReport macro = compute_metrics(results, Weighting::macro);
  CHECK(macro.long_fwd_avg == doctest::Approx(70.0));  // mean(90, 50)
  const MetricsReport weighted = compute_metrics(results, Weighting::sample_weighted);
  CHECK(weighted.long_fwd_avg == doctest::Approx(100.0 * 24.0 / 40.0));
  CHECK(macro.long_cells.find("inv_S") == macro.long_cells.end());
}

TEST_CASE("oracle policy is perfect on any built dataset") {
  TempDir dir("oracle-eval");
  const BuildReport built = build_long_dataset(dir, 5);
  PolicyBackend oracle("oracle", PolicyKind::oracle);
  const auto results = run_eval(built.samples_file, oracle);
  REQUIRE(results.size() == built.samples);
  for (const auto& r : results) CHECK(r.correct);
  const MetricsReport report = compute_metrics(results, Weighting::macro, "oracle");
  for (const auto& key : long_cell_keys()) {
    CHECK(report.long_cells.at(key).accuracy() == doctest::Approx(100.0));
  }
  CHECK(report.long_avg == doctest::Approx(100.0));
  CHECK(report.bias_gap == doctest::Approx(0.0));
  CHECK(report.parse_error_rate == doctest::Approx(0.0));
}

TEST_CASE("always_second splits a swap-closed set into 100/0 with gap 100") {
  TempDir dir("bias-eval");
  const BuildReport built = build_long_dataset(dir, 8);
  PolicyBackend second("always_second", PolicyKind::always_second);
  const auto results = run_eval(built.samples_file, second);
  const MetricsReport report = compute_metrics(results, Weighting::macro, "always_second");
  // Forward ground truth is always img2, inverse always img1.
  CHECK(report.long_fwd_avg == 100.0);
  CHECK(report.long_inv_avg == 0.0);
  CHECK(report.long_avg == 50.0);
  CHECK(report.bias_gap == 100.0);
  CHECK(report.overall_accuracy == 50.0);
}

TEST_CASE("seeded random lands near 50% on a swap-closed set") {
  TempDir dir("random-eval");
  const BuildReport built = build_long_dataset(dir, 30);
  REQUIRE(built.samples >= 2 * 500);
  PolicyBackend random_policy("seeded_random", PolicyKind::seeded_random, 11);
  const auto results = run_eval(built.samples_file, random_policy);
  const MetricsReport report = compute_metrics(results, Weighting::macro, "seeded_random");
  CHECK(report.overall_accuracy > 47.0);
  CHECK(report.overall_accuracy < 53.0);
}

TEST_CASE("unparseable responses score zero and are reported separately") {
  TempDir dir("garbage-eval");
  const BuildReport built = build_tag_dataset(dir, 2);
  ScriptedBackend garbage({"no committed answer"});
  const auto results = run_eval(built.samples_file, garbage);
  const MetricsReport report = compute_metrics(results, Weighting::macro, "garbage");
  CHECK(report.overall_accuracy == 0.0);
  CHECK(report.parse_error_rate == doctest::Approx(100.0));
  CHECK(report.transport_failure_rate == doctest::Approx(0.0));
}

TEST_CASE("short prompts for short samples, long prompts for long samples") {
  TempDir dir("prompt-eval");
  const BuildReport tag = build_tag_dataset(dir, 1);
  ScriptedBackend probe({"closer to completion: [img1]"});
  (void)run_eval(tag.samples_file, probe);
  REQUIRE_FALSE(probe.seen_prompts.empty());
  for (const auto& p : probe.seen_prompts) {
    CHECK(p.find("carefully compare the differences") != std::string::npos);
  }

  TempDir dir2("prompt-eval-long");
  const BuildReport long_ds = build_long_dataset(dir2, 2);
  ScriptedBackend probe2({"closer to completion: [img1]"});
  (void)run_eval(long_ds.samples_file, probe2);
  REQUIRE_FALSE(probe2.seen_prompts.empty());
  for (const auto& p : probe2.seen_prompts) {
    CHECK(p.find("Subtasks: 1. step 1;") != std::string::npos);
    CHECK(p.find("occur in the same task") != std::string::npos);
  }
}

TEST_CASE("duplicate sample ids are rejected") {
  TempDir dir("dup");
  const auto file = dir.path() / "dup.jsonl";
  const std::string line = R"({"id":"x","stage":"tag","task_name":"t","img1":"a",)"
                           R"("img2":"b","direction":"forward","level":"short",)"
                           R"("bin_or_window":"5","y_gt":"img2","context":{"kind":"empty"}})";
  detail::write_text_file(file, line + "\n" + line + "\n");
  PolicyBackend oracle("oracle", PolicyKind::oracle);
  CHECK_THROWS_AS(run_eval(file, oracle), DatasetError);
}

TEST_CASE("transcript replay reproduces metrics bit-exactly") {
  TempDir dir("replay");
  const BuildReport built = build_long_dataset(dir, 6);
  PolicyBackend random_policy("seeded_random", PolicyKind::seeded_random, 21);
  TranscriptWriter transcript(dir.path() / "transcript.jsonl");
  EvalOptions options;
  options.transcript = &transcript;
  const auto results = run_eval(built.samples_file, random_policy, options);
  const MetricsReport original =
      compute_metrics(results, Weighting::macro, "seeded_random");

  const auto replayed =
      rescore_from_transcript(built.samples_file, dir.path() / "transcript.jsonl");
  const MetricsReport rescored =
      compute_metrics(replayed, Weighting::macro, "seeded_random");
  CHECK(original.to_json().dump() == rescored.to_json().dump());

  // Metrics JSON round-trips through from_json without drift.
  const MetricsReport parsed = MetricsReport::from_json(original.to_json());
  CHECK(parsed.to_json().dump() == original.to_json().dump());
}

TEST_CASE("report rendering is byte-stable, sorted, and parse-back clean") {
  TempDir dir("report");
  const BuildReport built = build_long_dataset(dir, 4);
  std::map<std::string, MetricsReport> reports;
  for (const char* name : {"zeta", "alpha"}) {
    PolicyBackend backend(name, PolicyKind::always_second);
    reports[name] =
        compute_metrics(run_eval(built.samples_file, backend), Weighting::macro, name);
  }
  const std::string csv = render_report_csv(reports);
  const std::string csv2 = render_report_csv(reports);
  CHECK(csv == csv2);

  std::vector<std::string> lines;
  for (auto line : detail::split_lines(csv)) {
    if (!line.empty()) lines.emplace_back(line);
  }
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] ==
        "backend,5,6,7,8,9,10,11,12+,short_avg,fwd_S,fwd_M,fwd_L,inv_S,inv_M,"
        "inv_L,long_avg,gap,parse_err");
  CHECK(lines[1].rfind("alpha,", 0) == 0);  // rows sorted by backend id
  CHECK(lines[2].rfind("zeta,", 0) == 0);
  // Short cells are empty on a long-only dataset.
  CHECK(lines[1].find("alpha,-,-,-,-,-,-,-,-,-,") == 0);

  // Parse-back: re-formatting each numeric field reproduces the same text.
  const std::string row = lines[1];
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = row.find(',', start);
    fields.push_back(row.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  REQUIRE(fields.size() == 19);
  for (std::size_t i = 1; i < fields.size(); ++i) {
    if (fields[i] == "-") continue;
    CHECK(detail::format_fixed1(std::stod(fields[i])) == fields[i]);
  }

  const std::string md = render_report_markdown(reports);
  CHECK(md.find("| backend |") == 0);
  CHECK(md.find("| alpha |") != std::string::npos);
}

TEST_CASE("oracle completion curve is a monotone staircase") {
  Trajectory t = egotest::make_trajectory("curve", 120, 4);
  const PlannedSkeleton skeleton = decompose_from_metadata(t);
  PolicyBackend oracle("oracle", PolicyKind::oracle);
  CurveOptions options;
  options.stride = 3;
  options.n_anchors = 10;
  options.seed = 9;
  const CompletionCurve curve = completion_curve(t, skeleton, oracle, options);
  REQUIRE_FALSE(curve.points.empty());
  CHECK(curve.points.front().second <= 0.2);
  CHECK(curve.points.back().first == 119);
  CHECK(curve.points.back().second == doctest::Approx(1.0));
  double prev = -1.0;
  std::set<double> levels;
  int prev_frame = -1;
  for (const auto& [frame, progress] : curve.points) {
    CHECK(frame > prev_frame);
    CHECK(progress >= prev);  // rank-counting oracle: non-decreasing
    prev = progress;
    prev_frame = frame;
    levels.insert(progress);
  }
  CHECK(levels.size() >= 3);
  CHECK(curve.method.find("anchor-tournament") == 0);

  // Rank-counting oracle: progress equals the fraction of anchors at or
  // before the probe. Re-derive anchors through the same seeded draw.
  const std::string csv = curve_to_csv(curve);
  CHECK(csv.find("# method: anchor-tournament") == 0);
  CHECK(csv.find("frame_index,progress") != std::string::npos);
}

TEST_CASE("always_second yields a constant 1.0 curve") {
  Trajectory t = egotest::make_trajectory("flat", 60, 3);
  const PlannedSkeleton skeleton = decompose_from_metadata(t);
  PolicyBackend second("always_second", PolicyKind::always_second);
  CurveOptions options;
  options.stride = 10;
  options.n_anchors = 5;
  const CompletionCurve curve = completion_curve(t, skeleton, second, options);
  for (const auto& [_, progress] : curve.points) {
    CHECK(progress == doctest::Approx(1.0));  // the probe is always img2
  }
}

TEST_CASE("curve preconditions") {
  Trajectory t = egotest::make_trajectory("tiny", 6, 2);
  const PlannedSkeleton skeleton = decompose_from_metadata(t);
  PolicyBackend oracle("oracle", PolicyKind::oracle);
  CurveOptions bad;
  bad.n_anchors = 6;  // trajectory length must exceed n_anchors
  CHECK_THROWS(completion_curve(t, skeleton, oracle, bad));
  bad.n_anchors = 2;
  bad.stride = 0;
  CHECK_THROWS(completion_curve(t, skeleton, oracle, bad));
}

}  // TEST_SUITE
