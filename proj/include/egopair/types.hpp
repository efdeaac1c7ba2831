// Shared vocabulary: the two-way image pick and pair presentation direction.

#pragma once

#include <string>
#include <string_view>

#include "egopair/errors.hpp"

namespace egopair {

// Which of the two presented images a label or verdict refers to.
enum class Pick { img1, img2 };

// Presentation order of a frame pair: forward = earlier frame first.
enum class Direction { forward, inverse };

inline std::string_view to_string(Pick p) {
  return p == Pick::img1 ? "img1" : "img2";
}

inline std::string_view to_string(Direction d) {
  return d == Direction::forward ? "forward" : "inverse";
}

inline Pick flipped(Pick p) { return p == Pick::img1 ? Pick::img2 : Pick::img1; }

inline Direction flipped(Direction d) {
  return d == Direction::forward ? Direction::inverse : Direction::forward;
}

inline Pick pick_from_string(std::string_view s) {
  if (s == "img1") return Pick::img1;
  if (s == "img2") return Pick::img2;
  throw SchemaError("y_gt", "expected img1 or img2, got \"" + std::string(s) + "\"");
}

inline Direction direction_from_string(std::string_view s) {
  if (s == "forward") return Direction::forward;
  if (s == "inverse") return Direction::inverse;
  throw SchemaError("direction", "expected forward or inverse, got \"" + std::string(s) + "\"");
}

}  // namespace egopair
