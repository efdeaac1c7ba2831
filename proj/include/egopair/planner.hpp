// Task decomposition into an ordered subtask skeleton, with two backends:
// metadata-backed (ground truth) and model-backed (generated at inference
// time, used only as prompt context).

#pragma once

#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "egopair/corpus.hpp"
#include "egopair/detail/text.hpp"
#include "egopair/errors.hpp"
#include "egopair/modelgw.hpp"
#include "egopair/promptkit.hpp"
#include "egopair/records.hpp"

namespace egopair {

struct DecompositionRequest {
  FrameRef initial_observation;  // the trajectory's first frame
  std::string task_name;
};

enum class PlanProvenance { metadata, model };

struct PlannedSkeleton {
  std::vector<std::string> labels;
  PlanProvenance provenance = PlanProvenance::metadata;
  std::string backend_id;  // set when provenance == model

  friend bool operator==(const PlannedSkeleton&, const PlannedSkeleton&) = default;
};

inline PlannedSkeleton make_planned_skeleton(std::vector<std::string> labels,
                                             PlanProvenance provenance,
                                             std::string backend_id = {}) {
  if (labels.empty()) {
    throw InvariantViolation("<skeleton>", "planned skeleton labels non-empty");
  }
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) {
      throw InvariantViolation("<skeleton>",
                               "duplicate adjacent label \"" + labels[i] + "\"");
    }
  }
  return {std::move(labels), provenance, std::move(backend_id)};
}

inline PlannedSkeleton decompose_from_metadata(const Trajectory& t) {
  if (!t.skeleton) throw NoSkeleton(t.id);
  std::vector<std::string> labels;
  labels.reserve(t.skeleton->subtasks.size());
  for (const auto& s : t.skeleton->subtasks) labels.push_back(s.label);
  return make_planned_skeleton(std::move(labels), PlanProvenance::metadata);
}

// Numbered-list grammar: lines matching ^\s*(\d+[.)]|-)\s+(.+)$ contribute
// group 2 as a label. Also tolerates "-" bullets.
inline std::vector<std::string> parse_numbered_list(std::string_view text) {
  static const std::regex line_re(R"(^\s*(\d+[.)]|-)\s+(.+)$)");
  std::vector<std::string> labels;
  for (std::string_view line : detail::split_lines(text)) {
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_match(line.begin(), line.end(), m, line_re)) {
      labels.emplace_back(detail::rstrip(std::string_view(&*m[2].first,
                                                          static_cast<std::size_t>(m[2].length()))));
    }
  }
  return labels;
}

inline PlannedSkeleton decompose_with_model(const DecompositionRequest& req,
                                            ModelBackend& backend,
                                            const TemplateSet& templates = {}) {
  if (req.task_name.empty()) throw Error("decomposition request has empty task name");
  const PromptText prompt = render_decompose_prompt(req.task_name, templates);
  const std::string response =
      backend.query({req.initial_observation.path.string()}, prompt);
  std::vector<std::string> labels = parse_numbered_list(response);
  if (labels.empty()) {
    throw ParseError("no numbered subtask list in decomposition response", response);
  }
  return make_planned_skeleton(std::move(labels), PlanProvenance::model, backend.id());
}

// Training record for the planner: the input section carries only the first
// frame and the task prompt; the target is the full ordered label sequence,
// rendered as a numbered list so it round-trips through the list grammar.
inline TrainingRecord serialize_planner_record(const Trajectory& t,
                                               const TemplateSet& templates = {}) {
  if (!t.skeleton) throw NoSkeleton(t.id);
  if (t.frames.empty()) throw EmptyTrajectory(t.id);
  TrainingRecord record;
  record.id = "plan-" + t.id;
  record.input.push_back(
      MessagePart::text(render_decompose_prompt(t.task_name, templates).text));
  record.input.push_back(MessagePart::image(t.frames.front().path.string()));
  std::string target;
  for (std::size_t k = 0; k < t.skeleton->subtasks.size(); ++k) {
    if (k > 0) target += "\n";
    target += std::to_string(k + 1) + ". " + t.skeleton->subtasks[k].label;
  }
  record.target = std::move(target);
  return record;
}

}  // namespace egopair
