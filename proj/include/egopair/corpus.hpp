// Trajectory ingestion: manifest loading, subtask skeleton validation, and
// the frame -> subtask index map. Corpora are immutable after load and safe
// to share across readers.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "egopair/detail/text.hpp"
#include "egopair/errors.hpp"

namespace egopair {

struct FrameRef {
  std::string trajectory_id;
  int index = 0;  // position in the raw frame sequence
  std::filesystem::path path;
  std::optional<std::int64_t> timestamp_ms;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct SubtaskRange {
  std::string label;
  int start = 0;  // inclusive raw frame index
  int end = 0;    // inclusive raw frame index

  friend bool operator==(const SubtaskRange&, const SubtaskRange&) = default;
};

// Ordered, non-overlapping, contiguous ranges that jointly cover the
// trajectory's raw frame span.
struct SubtaskSkeleton {
  std::vector<SubtaskRange> subtasks;

  int subtask_count() const { return static_cast<int>(subtasks.size()); }

  friend bool operator==(const SubtaskSkeleton&, const SubtaskSkeleton&) = default;
};

struct Trajectory {
  std::string id;
  std::string task_name;
  std::string source;
  std::vector<FrameRef> frames;
  std::optional<SubtaskSkeleton> skeleton;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Corpus {
  std::vector<Trajectory> trajectories;
  std::filesystem::path root;
  std::string manifest_version;

  const Trajectory* find(std::string_view id) const {
    for (const auto& t : trajectories) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct Violation {
  std::string trajectory_id;
  std::string field;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// ---- subtask index map -----------------------------------------------------

// 1-based subtask index of frame_index under the skeleton's covered span.
inline int subtask_index(const SubtaskSkeleton& skeleton, int frame_index) {
  if (skeleton.subtasks.empty()) throw NoSkeleton("<skeleton>");
  if (frame_index < skeleton.subtasks.front().start ||
      frame_index > skeleton.subtasks.back().end) {
    throw OutOfRange("frame index " + std::to_string(frame_index) +
                     " outside skeleton span [" +
                     std::to_string(skeleton.subtasks.front().start) + ", " +
                     std::to_string(skeleton.subtasks.back().end) + "]");
  }
  auto it = std::upper_bound(
      skeleton.subtasks.begin(), skeleton.subtasks.end(), frame_index,
      [](int idx, const SubtaskRange& r) { return idx < r.start; });
  return static_cast<int>(it - skeleton.subtasks.begin());
}

inline int subtask_index(const Trajectory& t, int frame_index) {
  if (!t.skeleton) throw NoSkeleton(t.id);
  return subtask_index(*t.skeleton, frame_index);
}

// ---- validation ------------------------------------------------------------

namespace detail_corpus {

inline void collect_trajectory_violations(const Trajectory& t, bool check_files,
                                          std::vector<Violation>& out) {
  if (t.frames.empty()) {
    out.push_back({t.id, "frames", "frames non-empty"});
    return;
  }
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    if (t.frames[i].index != static_cast<int>(i)) {
      out.push_back({t.id, "frames[" + std::to_string(i) + "].index",
                     "frame indices must be strictly increasing from 0, got " +
                         std::to_string(t.frames[i].index)});
      break;
    }
  }
  if (check_files) {
    for (const auto& f : t.frames) {
      if (!std::filesystem::exists(f.path)) {
        out.push_back({t.id, "frames[" + std::to_string(f.index) + "].path",
                       "missing file: " + f.path.string()});
      }
    }
  }
  if (!t.skeleton) return;

  const auto& ranges = t.skeleton->subtasks;
  const int last_frame = static_cast<int>(t.frames.size()) - 1;
  if (ranges.empty()) {
    out.push_back({t.id, "subtasks", "skeleton must have K >= 1 subtasks"});
    return;
  }
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    const auto& r = ranges[k];
    const std::string field = "subtasks[" + std::to_string(k) + "]";
    if (r.label.empty()) {
      out.push_back({t.id, field + ".label", "label non-empty"});
    }
    if (r.start > r.end) {
      out.push_back({t.id, field,
                     "range [" + std::to_string(r.start) + ".." +
                         std::to_string(r.end) + "] has start > end"});
    }
    if (r.start < 0 || r.end > last_frame) {
      out.push_back({t.id, field,
                     "range [" + std::to_string(r.start) + ".." +
                         std::to_string(r.end) + "] exceeds frame span [0.." +
                         std::to_string(last_frame) + "]"});
    }
    if (k > 0) {
      const auto& prev = ranges[k - 1];
      if (r.start <= prev.end) {
        out.push_back({t.id, field,
                       "range [" + std::to_string(r.start) + ".." +
                           std::to_string(r.end) + "] overlaps previous range [" +
                           std::to_string(prev.start) + ".." +
                           std::to_string(prev.end) + "]"});
      } else if (r.start != prev.end + 1) {
        out.push_back({t.id, field,
                       "gap between previous end " + std::to_string(prev.end) +
                           " and start " + std::to_string(r.start)});
      }
    }
  }
  if (ranges.front().start != 0) {
    out.push_back({t.id, "subtasks[0]",
                   "coverage must start at frame 0, starts at " +
                       std::to_string(ranges.front().start)});
  }
  if (ranges.back().end != last_frame) {
    out.push_back({t.id, "subtasks[" + std::to_string(ranges.size() - 1) + "]",
                   "coverage must end at frame " + std::to_string(last_frame) +
                       ", ends at " + std::to_string(ranges.back().end)});
  }
}

}  // namespace detail_corpus

// Violations are data, not errors: an empty report means a fully valid corpus.
inline ValidationReport validate_corpus(const Corpus& c, bool check_files = false) {
  ValidationReport report;
  std::unordered_set<std::string> seen_ids;
  for (const auto& t : c.trajectories) {
    if (!seen_ids.insert(t.id).second) {
      report.violations.push_back({t.id, "id", "duplicate trajectory id"});
    }
    detail_corpus::collect_trajectory_violations(t, check_files, report.violations);
  }
  return report;
}

// ---- manifest I/O ----------------------------------------------------------
//
// Manifest format (frame paths relative to the manifest's directory):
//   { "manifest_version": "1",
//     "trajectories": [ { "id", "task_name", "source",
//                         "frames": ["rel/path0.jpg", ...],
//                         "subtasks": [ {"label", "start", "end"}, ... ] } ] }

inline Corpus load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path.string());
  nlohmann::json doc = nlohmann::json::parse(detail::read_text_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw SchemaError("<root>", "manifest is not a JSON object");
  }
  if (!doc.contains("manifest_version") || !doc["manifest_version"].is_string()) {
    throw SchemaError("manifest_version", "missing or not a string");
  }
  if (!doc.contains("trajectories") || !doc["trajectories"].is_array()) {
    throw SchemaError("trajectories", "missing or not an array");
  }

  Corpus corpus;
  corpus.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  corpus.manifest_version = doc["manifest_version"].get<std::string>();

  std::size_t ti = 0;
  for (const auto& jt : doc["trajectories"]) {
    const std::string where = "trajectories[" + std::to_string(ti) + "]";
    if (!jt.is_object()) throw SchemaError(where, "not an object");
    if (!jt.contains("id") || !jt["id"].is_string()) {
      throw SchemaError(where + ".id", "missing or not a string");
    }
    Trajectory t;
    t.id = jt["id"].get<std::string>();
    if (!jt.contains("task_name") || !jt["task_name"].is_string()) {
      throw SchemaError(where + ".task_name", "missing or not a string");
    }
    t.task_name = jt["task_name"].get<std::string>();
    if (jt.contains("source")) {
      if (!jt["source"].is_string()) throw SchemaError(where + ".source", "not a string");
      t.source = jt["source"].get<std::string>();
    }
    if (!jt.contains("frames") || !jt["frames"].is_array()) {
      throw SchemaError(where + ".frames", "missing or not an array");
    }
    int index = 0;
    for (const auto& jf : jt["frames"]) {
      if (!jf.is_string()) {
        throw SchemaError(where + ".frames[" + std::to_string(index) + "]",
                          "not a string");
      }
      FrameRef f;
      f.trajectory_id = t.id;
      f.index = index++;
      f.path = (corpus.root / jf.get<std::string>()).lexically_normal();
      t.frames.push_back(std::move(f));
    }
    if (jt.contains("subtasks")) {
      if (!jt["subtasks"].is_array()) throw SchemaError(where + ".subtasks", "not an array");
      SubtaskSkeleton skeleton;
      std::size_t si = 0;
      for (const auto& js : jt["subtasks"]) {
        const std::string sw = where + ".subtasks[" + std::to_string(si++) + "]";
        if (!js.is_object() || !js.contains("label") || !js["label"].is_string() ||
            !js.contains("start") || !js["start"].is_number_integer() ||
            !js.contains("end") || !js["end"].is_number_integer()) {
          throw SchemaError(sw, "expected {label: string, start: int, end: int}");
        }
        skeleton.subtasks.push_back({js["label"].get<std::string>(),
                                     js["start"].get<int>(), js["end"].get<int>()});
      }
      t.skeleton = std::move(skeleton);
    }

    std::vector<Violation> violations;
    detail_corpus::collect_trajectory_violations(t, /*check_files=*/false, violations);
    if (!violations.empty()) {
      throw InvariantViolation(t.id, violations.front().field + ": " +
                                         violations.front().detail);
    }
    corpus.trajectories.push_back(std::move(t));
    ++ti;
  }

  std::unordered_set<std::string> ids;
  for (const auto& t : corpus.trajectories) {
    if (!ids.insert(t.id).second) {
      throw InvariantViolation(t.id, "duplicate trajectory id");
    }
  }
  return corpus;
}

inline void save_manifest(const Corpus& c, const std::filesystem::path& path) {
  const std::filesystem::path dir =
      path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  nlohmann::json doc;
  doc["manifest_version"] = c.manifest_version;
  doc["trajectories"] = nlohmann::json::array();
  for (const auto& t : c.trajectories) {
    nlohmann::json jt;
    jt["id"] = t.id;
    jt["task_name"] = t.task_name;
    jt["source"] = t.source;
    jt["frames"] = nlohmann::json::array();
    for (const auto& f : t.frames) {
      jt["frames"].push_back(f.path.lexically_relative(dir).generic_string());
    }
    if (t.skeleton) {
      jt["subtasks"] = nlohmann::json::array();
      for (const auto& s : t.skeleton->subtasks) {
        jt["subtasks"].push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
      }
    }
    doc["trajectories"].push_back(std::move(jt));
  }
  detail::write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace egopair
