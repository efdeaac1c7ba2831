// Prompt rendering and verdict parsing. Templates are golden text rendered
// by pure placeholder substitution; the checked-in files under templates/
// must stay byte-identical to the embedded constants.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egopair/detail/text.hpp"
#include "egopair/errors.hpp"
#include "egopair/types.hpp"

namespace egopair {

enum class TemplateId { short_v1, long_v1, decompose_v1, annotate_v1 };

inline std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::short_v1: return "short_v1";
    case TemplateId::long_v1: return "long_v1";
    case TemplateId::decompose_v1: return "decompose_v1";
    case TemplateId::annotate_v1: return "annotate_v1";
  }
  return "?";
}

struct PromptText {
  std::string text;
  TemplateId template_id = TemplateId::short_v1;
};

namespace templates {

inline constexpr std::string_view short_v1 =
    R"(Role: You are a spatial awareness expert.

Input Image: [Image 1], [Image 2],

Task Name: {task_name},

Instruction: Please observe the contents of the two images and carefully compare the differences between the two states.

Note: The two states have a chronological relationship (the exact order is not specified). The robotic arm in the images is performing the task: {task_name}. Please analyze and determine which of img1 or img2 is closer to completing the task. Provide a detailed and unambiguous analysis. Avoid using vague concepts (e.g., "fruit area") and focus strictly on the state of the robotic arm and the target objects involved in the task.

Output format: closer to completion: [img1 or img2].
)";

inline constexpr std::string_view long_v1 =
    R"(Role: You are a spatial awareness expert.

Input Image: [Image 1], [Image 2],

Task Name: {task_name},

Subtasks: {subtask_sequence}.

Instruction: Your task is to observe and describe the two pictures (img1 and img2) respectively.

Hint: These two pictures occur in the same task.

Output format: closer to completion: [img1 or img2].
)";

inline constexpr std::string_view decompose_v1 =
    R"(Role: You are a task planning expert.

Input Image: [Image 1],

Task Name: {task_name},

Instruction: Decompose the task into an ordered sequence of atomic subtasks. Each subtask must be a single physical step, functionally independent of the others, grounded in the initial scene observation.

Output format: a numbered list with one subtask per line, e.g.
1. first subtask
2. second subtask
)";

inline constexpr std::string_view annotate_v1 =
    R"(Role: You are a spatial awareness expert.

Input Image: [Image 1], [Image 2],

Task Name: {task_name},

Instruction: Describe the state of the robotic arm and the target objects in each image, then reason step by step about which state is further along in the task. Avoid using vague concepts and focus strictly on the state of the robotic arm and the target objects involved in the task.

Output format: a detailed reasoning path whose final line is: closer to completion: [img1 or img2].
)";

}  // namespace templates

// A full set of prompt templates. Default-constructed instances carry the
// embedded golden text; load_dir reads user-edited copies from disk with
// newlines normalized to "\n".
struct TemplateSet {
  std::string short_v1{templates::short_v1};
  std::string long_v1{templates::long_v1};
  std::string decompose_v1{templates::decompose_v1};
  std::string annotate_v1{templates::annotate_v1};

  static TemplateSet load_dir(const std::filesystem::path& dir) {
    TemplateSet set;
    set.short_v1 = detail::normalize_newlines(detail::read_text_file(dir / "short_v1.txt"));
    set.long_v1 = detail::normalize_newlines(detail::read_text_file(dir / "long_v1.txt"));
    set.decompose_v1 =
        detail::normalize_newlines(detail::read_text_file(dir / "decompose_v1.txt"));
    set.annotate_v1 =
        detail::normalize_newlines(detail::read_text_file(dir / "annotate_v1.txt"));
    return set;
  }
};

inline PromptText render_short_prompt(std::string_view task_name,
                                      const TemplateSet& set = {}) {
  return {detail::render_placeholders(set.short_v1, {{"{task_name}", task_name}}),
          TemplateId::short_v1};
}

// Subtask sequence renders as a numbered list joined by "; " in skeleton order.
inline std::string format_subtask_sequence(std::span<const std::string> subtasks) {
  std::string out;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    if (i > 0) out += "; ";
    out += std::to_string(i + 1) + ". " + subtasks[i];
  }
  return out;
}

inline PromptText render_long_prompt(std::string_view task_name,
                                     std::span<const std::string> subtasks,
                                     const TemplateSet& set = {}) {
  const std::string sequence = format_subtask_sequence(subtasks);
  return {detail::render_placeholders(set.long_v1, {{"{task_name}", task_name},
                                                    {"{subtask_sequence}", sequence}}),
          TemplateId::long_v1};
}

inline PromptText render_decompose_prompt(std::string_view task_name,
                                          const TemplateSet& set = {}) {
  return {detail::render_placeholders(set.decompose_v1, {{"{task_name}", task_name}}),
          TemplateId::decompose_v1};
}

inline PromptText render_annotate_prompt(std::string_view task_name,
                                         const TemplateSet& set = {}) {
  return {detail::render_placeholders(set.annotate_v1, {{"{task_name}", task_name}}),
          TemplateId::annotate_v1};
}

// ---- verdict parsing ---------------------------------------------------------

struct Verdict {
  std::optional<Pick> choice;  // set only when the grammar matched
  bool weak_match = false;     // set when only the bare-token fallback fired
  std::string raw;

  bool parsed() const { return choice.has_value(); }
};

inline std::string format_verdict_line(Pick p) {
  return std::string("closer to completion: [") + std::string(to_string(p)) + "]";
}

namespace detail_prompt {

// First img1/img2 token in s (case-insensitive); npos_pick if none.
inline std::optional<Pick> first_pick_token(std::string_view s) {
  const std::string lower = detail::to_lower(s);
  std::size_t best = std::string::npos;
  std::optional<Pick> pick;
  for (auto [token, value] :
       {std::pair<std::string_view, Pick>{"img1", Pick::img1}, {"img2", Pick::img2}}) {
    std::size_t at = lower.find(token);
    if (at != std::string::npos && at < best) {
      best = at;
      pick = value;
    }
  }
  return pick;
}

}  // namespace detail_prompt

// Total over arbitrary text. Anchors on the LAST line containing the phrase
// "closer to completion" followed by an img1/img2 token on the same line;
// chain-of-thought responses routinely mention both tokens before concluding,
// so earlier mentions must not win. Fallback: if the anchored pattern is
// absent but exactly one of the two tokens appears anywhere, that token is
// returned flagged as a weak match.
inline Verdict parse_verdict(std::string_view response) {
  Verdict v;
  v.raw = std::string(response);

  static constexpr std::string_view kAnchor = "closer to completion";
  const std::string lower = detail::to_lower(response);

  std::size_t search_from = 0;
  std::optional<Pick> anchored;
  while (true) {
    std::size_t at = lower.find(kAnchor, search_from);
    if (at == std::string::npos) break;
    std::size_t line_end = lower.find('\n', at);
    if (line_end == std::string::npos) line_end = lower.size();
    std::size_t after = at + kAnchor.size();
    auto pick = detail_prompt::first_pick_token(
        std::string_view(lower).substr(after, line_end - after));
    if (pick) anchored = pick;  // keep scanning: last anchored match wins
    search_from = at + 1;
  }
  if (anchored) {
    v.choice = anchored;
    return v;
  }

  const bool has1 = lower.find("img1") != std::string::npos;
  const bool has2 = lower.find("img2") != std::string::npos;
  if (has1 != has2) {
    v.choice = has1 ? Pick::img1 : Pick::img2;
    v.weak_match = true;
  }
  return v;
}

}  // namespace egopair
