// Curriculum dataset assembly. Builds the three stage files (cot / tag /
// long) from sampled pairs, attaches the stage-appropriate context, and
// serializes both the sample schema and the training-record schema as
// line-delimited JSON. Output line order is fixed by (trajectory order,
// bucket order, draw order), so identical inputs produce identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "egopair/corpus.hpp"
#include "egopair/detail/hash.hpp"
#include "egopair/detail/jsonl.hpp"
#include "egopair/errors.hpp"
#include "egopair/modelgw.hpp"
#include "egopair/planner.hpp"
#include "egopair/promptkit.hpp"
#include "egopair/records.hpp"
#include "egopair/sampling.hpp"

namespace egopair {

// ---- stages and context --------------------------------------------------------

enum class Stage { cot, tag, long_horizon };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::cot: return "cot";
    case Stage::tag: return "tag";
    case Stage::long_horizon: return "long";
  }
  return "?";
}

inline Stage stage_from_string(std::string_view s) {
  if (s == "cot") return Stage::cot;
  if (s == "tag") return Stage::tag;
  if (s == "long") return Stage::long_horizon;
  throw SchemaError("stage", "expected cot, tag or long, got \"" + std::string(s) + "\"");
}

// Auxiliary context attached to a sample. Exactly one variant:
// a reasoning path (cot), nothing (tag), or the subtask skeleton (long).
struct Context {
  enum class Kind { cot_path, empty, skeleton };
  Kind kind = Kind::empty;
  std::string text;                    // cot_path only
  std::vector<std::string> subtasks;   // skeleton only

  static Context empty_context() { return {}; }
  static Context cot_path(std::string path_text) {
    return {Kind::cot_path, std::move(path_text), {}};
  }
  static Context skeleton(std::vector<std::string> labels) {
    return {Kind::skeleton, {}, std::move(labels)};
  }

  friend bool operator==(const Context&, const Context&) = default;
};

inline std::string_view to_string(Context::Kind k) {
  switch (k) {
    case Context::Kind::cot_path: return "cot_path";
    case Context::Kind::empty: return "empty";
    case Context::Kind::skeleton: return "skeleton";
  }
  return "?";
}

// The allowed (stage, context kind) combinations; everything else is a
// violation of the context rule.
inline bool context_rule_holds(Stage stage, const Context& context) {
  switch (stage) {
    case Stage::cot:
      return context.kind == Context::Kind::cot_path && !context.text.empty();
    case Stage::tag:
      return context.kind == Context::Kind::empty;
    case Stage::long_horizon:
      return context.kind == Context::Kind::skeleton && !context.subtasks.empty();
  }
  return false;
}

struct DatasetSample {
  std::string id;
  OrientedPair pair;
  Context context;
  Stage stage = Stage::tag;
};

// Deterministic id over (trajectory, frame indices, direction, stage).
inline std::string sample_id(std::string_view trajectory_id, int img1_index,
                             int img2_index, Direction direction, Stage stage) {
  std::string key;
  key.reserve(trajectory_id.size() + 32);
  key.append(trajectory_id);
  key += '|';
  key += std::to_string(img1_index);
  key += '|';
  key += std::to_string(img2_index);
  key += '|';
  key.append(to_string(direction));
  key += '|';
  key.append(to_string(stage));
  return detail::hex64(detail::fnv1a64(key));
}

// ---- CoT annotation --------------------------------------------------------------

// Queries the annotator for a reasoning path over the pair as presented.
// The path must end with a verdict line agreeing with y_gt; non-conforming
// outputs are rejected (ParseError), wrong conclusions are rejected
// (LabelMismatch). Rejected outputs are never repaired.
inline Context annotate_cot(const OrientedPair& pair, ModelBackend& annotator,
                            const TemplateSet& templates = {},
                            std::uint64_t query_index = 0) {
  const PromptText prompt = render_annotate_prompt(pair.task_name, templates);
  QueryContext ctx;
  ctx.index = query_index;
  ctx.oracle_hint = pair.y_gt;
  const std::string response = annotator.query(
      {pair.img1.path.string(), pair.img2.path.string()}, prompt, ctx);

  const Verdict verdict = parse_verdict(response);
  if (!verdict.parsed() || verdict.weak_match) {
    throw ParseError("annotator output has no verdict line", response);
  }
  std::string_view last_line;
  for (std::string_view line : detail::split_lines(response)) {
    if (!detail::strip(line).empty()) last_line = line;
  }
  if (!parse_verdict(last_line).parsed()) {
    throw ParseError("annotator verdict is not on the final line", response);
  }
  if (*verdict.choice != pair.y_gt) {
    throw LabelMismatch("annotator concluded " + std::string(to_string(*verdict.choice)) +
                            ", ground truth is " + std::string(to_string(pair.y_gt)),
                        response);
  }
  return Context::cot_path(response);
}

// ---- context attachment ------------------------------------------------------------

struct ContextSources {
  const PlannedSkeleton* skeleton = nullptr;    // long stage
  ModelBackend* annotator = nullptr;            // cot stage
  const std::string* preauthored_path = nullptr;  // cot stage alternative
  const TemplateSet* templates = nullptr;
  std::uint64_t query_index = 0;
};

inline DatasetSample attach_context(const OrientedPair& pair, Stage stage,
                                    const ContextSources& sources) {
  static const TemplateSet default_templates;
  const TemplateSet& templates =
      sources.templates ? *sources.templates : default_templates;

  Context context;
  switch (stage) {
    case Stage::tag:
      context = Context::empty_context();
      break;
    case Stage::long_horizon:
      if (!sources.skeleton) {
        throw MissingSkeleton("long-stage sample for trajectory \"" +
                              pair.img1.trajectory_id + "\" has no skeleton source");
      }
      context = Context::skeleton(sources.skeleton->labels);
      break;
    case Stage::cot:
      if (sources.preauthored_path && !sources.preauthored_path->empty()) {
        context = Context::cot_path(*sources.preauthored_path);
      } else if (sources.annotator) {
        context = annotate_cot(pair, *sources.annotator, templates, sources.query_index);
      } else {
        throw AnnotatorUnavailable(
            "cot stage requires an annotator backend or a pre-authored path");
      }
      break;
  }

  DatasetSample sample;
  sample.id = sample_id(pair.img1.trajectory_id, pair.img1.index, pair.img2.index,
                        pair.direction, stage);
  sample.pair = pair;
  sample.context = std::move(context);
  sample.stage = stage;
  return sample;
}

// ---- sample line schema --------------------------------------------------------------

inline nlohmann::json sample_to_json(const DatasetSample& s) {
  nlohmann::json context;
  context["kind"] = std::string(to_string(s.context.kind));
  if (s.context.kind == Context::Kind::cot_path) context["text"] = s.context.text;
  if (s.context.kind == Context::Kind::skeleton) context["subtasks"] = s.context.subtasks;
  return {{"id", s.id},
          {"stage", std::string(to_string(s.stage))},
          {"task_name", s.pair.task_name},
          {"img1", s.pair.img1.path.string()},
          {"img2", s.pair.img2.path.string()},
          {"direction", std::string(to_string(s.pair.direction))},
          {"level", std::string(level_label(s.pair.level))},
          {"bin_or_window", std::string(bin_or_window_label(s.pair.level))},
          {"y_gt", std::string(to_string(s.pair.y_gt))},
          {"context", context}};
}

namespace detail_builder {

inline LevelTag level_from_strings(const std::string& level,
                                   const std::string& bin_or_window) {
  if (level == "short") {
    for (IntervalBin b : kIntervalBins) {
      if (to_label(b) == bin_or_window) return b;
    }
    throw SchemaError("bin_or_window", "unknown interval bin \"" + bin_or_window + "\"");
  }
  if (level == "long") {
    for (WindowClass w : kWindowClasses) {
      if (to_label(w) == bin_or_window) return w;
    }
    throw SchemaError("bin_or_window", "unknown window class \"" + bin_or_window + "\"");
  }
  throw SchemaError("level", "expected short or long, got \"" + level + "\"");
}

}  // namespace detail_builder

// Frame indices are not part of the sample line schema; samples read back
// from disk carry index -1 and are suitable for evaluation and audit only.
inline DatasetSample sample_from_json(const nlohmann::json& j) {
  DatasetSample s;
  s.id = j.at("id").get<std::string>();
  s.stage = stage_from_string(j.at("stage").get<std::string>());
  s.pair.task_name = j.at("task_name").get<std::string>();
  s.pair.img1 = FrameRef{"", -1, j.at("img1").get<std::string>(), std::nullopt};
  s.pair.img2 = FrameRef{"", -1, j.at("img2").get<std::string>(), std::nullopt};
  s.pair.direction = direction_from_string(j.at("direction").get<std::string>());
  s.pair.y_gt = pick_from_string(j.at("y_gt").get<std::string>());
  s.pair.level = detail_builder::level_from_strings(
      j.at("level").get<std::string>(), j.at("bin_or_window").get<std::string>());
  const auto& jc = j.at("context");
  const std::string kind = jc.at("kind").get<std::string>();
  if (kind == "cot_path") {
    s.context = Context::cot_path(jc.at("text").get<std::string>());
  } else if (kind == "empty") {
    s.context = Context::empty_context();
  } else if (kind == "skeleton") {
    s.context = Context::skeleton(jc.at("subtasks").get<std::vector<std::string>>());
  } else {
    throw SchemaError("context.kind", "unknown kind \"" + kind + "\"");
  }
  return s;
}

// ---- training records ------------------------------------------------------------------

// Input = rendered stage prompt plus both image paths in img1/img2 order.
// Target: tag and long emit the conclusion only; cot emits the reasoning
// path, which already ends with the conclusion line. The skeleton appears
// in the long input prompt, never in the target.
inline TrainingRecord to_training_record(const DatasetSample& s,
                                         const TemplateSet& templates = {}) {
  TrainingRecord r;
  r.id = s.id;
  PromptText prompt =
      s.stage == Stage::long_horizon
          ? render_long_prompt(s.pair.task_name, s.context.subtasks, templates)
          : render_short_prompt(s.pair.task_name, templates);
  r.input.push_back(MessagePart::text(prompt.text));
  r.input.push_back(MessagePart::image(s.pair.img1.path.string()));
  r.input.push_back(MessagePart::image(s.pair.img2.path.string()));
  switch (s.stage) {
    case Stage::cot:
      r.target = s.context.text;
      break;
    case Stage::tag:
    case Stage::long_horizon:
      r.target = format_verdict_line(s.pair.y_gt);
      break;
  }
  return r;
}

// ---- stage builds -----------------------------------------------------------------------

struct BuildConfig {
  std::filesystem::path out_dir;
  int downsample_factor = 10;
  int quota_per_bin = 4;      // short-horizon stages (cot, tag)
  int quota_per_window = 4;   // long stage
  ModelBackend* annotator = nullptr;  // required for cot
  TemplateSet templates;
};

struct BuildReport {
  Stage stage = Stage::tag;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t base_pairs = 0;
  std::size_t dropped_pairs = 0;  // cot pairs rejected by the label filter
  std::map<std::string, std::size_t> by_bin_or_window;
  std::map<std::string, std::size_t> by_direction;
  std::vector<std::string> dropped_detail;
  std::filesystem::path samples_file;
  std::filesystem::path train_file;

  nlohmann::json to_json() const {
    return {{"stage", std::string(to_string(stage))},
            {"seed", seed},
            {"samples", samples},
            {"base_pairs", base_pairs},
            {"dropped_pairs", dropped_pairs},
            {"by_bin_or_window", by_bin_or_window},
            {"by_direction", by_direction},
            {"dropped_detail", dropped_detail},
            {"samples_file", samples_file.string()},
            {"train_file", train_file.string()}};
  }
};

namespace detail_builder {

inline void emit(const DatasetSample& sample, const TemplateSet& templates,
                 std::ofstream& samples_out, std::ofstream& train_out,
                 BuildReport& report) {
  samples_out << sample_to_json(sample).dump() << "\n";
  train_out << to_json(to_training_record(sample, templates)).dump() << "\n";
  ++report.samples;
  report.by_bin_or_window[std::string(bin_or_window_label(sample.pair.level))]++;
  report.by_direction[std::string(to_string(sample.pair.direction))]++;
}

}  // namespace detail_builder

// Builds one stage over the whole corpus. Emits the forward and inverse
// orientation of every drawn pair; for cot, a pair is dropped whole when
// either orientation's annotation is rejected, which keeps the output file
// swap-closed. Partial outputs are removed on failure.
inline BuildReport build_stage(const Corpus& corpus, Stage stage,
                               const BuildConfig& config, std::uint64_t seed) {
  BuildReport report;
  report.stage = stage;
  report.seed = seed;
  const std::string stage_name(to_string(stage));
  std::filesystem::create_directories(config.out_dir);
  report.samples_file = config.out_dir / (stage_name + ".samples.jsonl");
  report.train_file = config.out_dir / (stage_name + ".train.jsonl");

  if (stage == Stage::cot && config.annotator == nullptr) {
    throw AnnotatorUnavailable("cot build requires an annotator backend");
  }

  std::ofstream samples_out(report.samples_file, std::ios::binary | std::ios::trunc);
  std::ofstream train_out(report.train_file, std::ios::binary | std::ios::trunc);
  if (!samples_out || !train_out) {
    throw IoError("cannot open output files under " + config.out_dir.string());
  }

  std::uint64_t annotate_index = 0;
  try {
    for (const auto& t : corpus.trajectories) {
      const SampledSequence seq = downsample(t, config.downsample_factor);

      if (stage == Stage::long_horizon) {
        if (!t.skeleton) {
          throw MissingSkeleton("trajectory \"" + t.id + "\" has no subtask skeleton");
        }
        const PlannedSkeleton planned = decompose_from_metadata(t);
        ContextSources sources;
        sources.skeleton = &planned;
        sources.templates = &config.templates;
        for (const LongPair& p :
             enumerate_long_pairs(t, seq, *t.skeleton, config.quota_per_window, seed)) {
          auto [fwd, inv] =
              orient(p.earlier, p.later, {p.window, t.task_name, t.skeleton});
          ++report.base_pairs;
          detail_builder::emit(attach_context(fwd, stage, sources), config.templates,
                               samples_out, train_out, report);
          detail_builder::emit(attach_context(inv, stage, sources), config.templates,
                               samples_out, train_out, report);
        }
        continue;
      }

      for (const ShortPair& p :
           enumerate_short_pairs(t, seq, config.quota_per_bin, seed)) {
        auto [fwd, inv] = orient(p.earlier, p.later, {p.bin, t.task_name, t.skeleton});
        ++report.base_pairs;
        if (stage == Stage::tag) {
          ContextSources sources;
          detail_builder::emit(attach_context(fwd, stage, sources), config.templates,
                               samples_out, train_out, report);
          detail_builder::emit(attach_context(inv, stage, sources), config.templates,
                               samples_out, train_out, report);
          continue;
        }
        // cot: annotate both orientations; on rejection drop the pair whole
        // so the emitted file stays swap-closed.
        ContextSources sources;
        sources.annotator = config.annotator;
        sources.templates = &config.templates;
        try {
          sources.query_index = annotate_index++;
          DatasetSample fwd_sample = attach_context(fwd, stage, sources);
          sources.query_index = annotate_index++;
          DatasetSample inv_sample = attach_context(inv, stage, sources);
          detail_builder::emit(fwd_sample, config.templates, samples_out, train_out,
                               report);
          detail_builder::emit(inv_sample, config.templates, samples_out, train_out,
                               report);
        } catch (const ParseError& e) {
          ++report.dropped_pairs;
          report.dropped_detail.push_back(
              sample_id(t.id, p.earlier.index, p.later.index, Direction::forward, stage) +
              ": " + e.what());
        } catch (const LabelMismatch& e) {
          ++report.dropped_pairs;
          report.dropped_detail.push_back(
              sample_id(t.id, p.earlier.index, p.later.index, Direction::forward, stage) +
              ": " + e.what());
        }
      }
    }
  } catch (...) {
    samples_out.close();
    train_out.close();
    std::error_code ec;
    std::filesystem::remove(report.samples_file, ec);
    std::filesystem::remove(report.train_file, ec);
    throw;
  }
  return report;
}

// ---- dataset audits -----------------------------------------------------------------------

struct DatasetAudit {
  std::size_t samples = 0;
  std::size_t context_rule_violations = 0;
  std::size_t missing_twins = 0;       // forward/inverse swap-closure gaps
  std::size_t target_label_mismatches = 0;  // training targets disagreeing with y_gt

  bool ok() const {
    return context_rule_violations == 0 && missing_twins == 0 &&
           target_label_mismatches == 0;
  }
};

// Whole-file audit of the context rule and swap-closure: every sample's
// image-swapped, label-flipped, direction-flipped twin must be present.
inline DatasetAudit audit_dataset_file(const std::filesystem::path& samples_file) {
  DatasetAudit audit;
  std::map<std::string, std::size_t> keys;
  std::vector<std::string> twin_keys;
  detail::for_each_jsonl(samples_file, [&](std::size_t, const nlohmann::json& j) {
    DatasetSample s = sample_from_json(j);
    ++audit.samples;
    if (!context_rule_holds(s.stage, s.context)) ++audit.context_rule_violations;
    auto key = [&](const std::string& a, const std::string& b, Direction d, Pick y) {
      return a + "\x1f" + b + "\x1f" + std::string(to_string(d)) + "\x1f" +
             std::string(to_string(y)) + "\x1f" + std::string(to_string(s.stage)) +
             "\x1f" + std::string(bin_or_window_label(s.pair.level));
    };
    keys[key(s.pair.img1.path.string(), s.pair.img2.path.string(), s.pair.direction,
             s.pair.y_gt)]++;
    twin_keys.push_back(key(s.pair.img2.path.string(), s.pair.img1.path.string(),
                            flipped(s.pair.direction), flipped(s.pair.y_gt)));
  });
  for (const auto& twin : twin_keys) {
    if (keys.find(twin) == keys.end()) ++audit.missing_twins;
  }
  return audit;
}

// Audit of built training records against their samples: the last line of
// every non-planner target must parse back to the sample's label.
inline std::size_t audit_training_targets(const std::filesystem::path& samples_file,
                                          const std::filesystem::path& train_file) {
  std::map<std::string, Pick> labels;
  detail::for_each_jsonl(samples_file, [&](std::size_t, const nlohmann::json& j) {
    labels[j.at("id").get<std::string>()] =
        pick_from_string(j.at("y_gt").get<std::string>());
  });
  std::size_t mismatches = 0;
  detail::for_each_jsonl(train_file, [&](std::size_t, const nlohmann::json& j) {
    TrainingRecord r = training_record_from_json(j);
    auto it = labels.find(r.id);
    if (it == labels.end()) {
      ++mismatches;
      return;
    }
    std::string_view last_line;
    for (std::string_view line : detail::split_lines(r.target)) {
      if (!detail::strip(line).empty()) last_line = line;
    }
    const Verdict v = parse_verdict(last_line);
    if (!v.parsed() || *v.choice != it->second) ++mismatches;
  });
  return mismatches;
}

}  // namespace egopair
