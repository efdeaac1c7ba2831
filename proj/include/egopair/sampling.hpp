// Frame-pair sampling: multi-scale temporal downsampling, short-horizon
// interval binning, long-horizon window classification, and bidirectional
// pair construction. All draws are counter-seeded per (trajectory, bucket),
// so output is byte-stable for a fixed (corpus, config, seed) regardless of
// how trajectories are scheduled.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "egopair/corpus.hpp"
#include "egopair/detail/hash.hpp"
#include "egopair/errors.hpp"
#include "egopair/types.hpp"

namespace egopair {

// ---- downsampling ----------------------------------------------------------

struct SampledSequence {
  std::string trajectory_id;
  int factor = 1;
  std::vector<int> kept_indices;  // raw frame indices, strictly increasing
};

// Keeps every factor-th frame starting at raw index 0; factor 1 is identity.
inline SampledSequence downsample(const Trajectory& t, int factor) {
  if (factor < 1) throw Error("downsample factor must be >= 1, got " + std::to_string(factor));
  if (t.frames.empty()) throw EmptyTrajectory(t.id);
  SampledSequence seq;
  seq.trajectory_id = t.id;
  seq.factor = factor;
  for (int i = 0; i < static_cast<int>(t.frames.size()); i += factor) {
    seq.kept_indices.push_back(i);
  }
  return seq;
}

// ---- short-horizon interval bins -------------------------------------------

// The difficulty bins for the downsampled gap between paired frames.
// Gaps below 5 are outside the sampling space; 12 and above share one bin.
enum class IntervalBin { b5, b6, b7, b8, b9, b10, b11, b12_plus };

inline constexpr std::array<IntervalBin, 8> kIntervalBins = {
    IntervalBin::b5, IntervalBin::b6,  IntervalBin::b7,  IntervalBin::b8,
    IntervalBin::b9, IntervalBin::b10, IntervalBin::b11, IntervalBin::b12_plus};

inline std::string_view to_label(IntervalBin b) {
  switch (b) {
    case IntervalBin::b5: return "5";
    case IntervalBin::b6: return "6";
    case IntervalBin::b7: return "7";
    case IntervalBin::b8: return "8";
    case IntervalBin::b9: return "9";
    case IntervalBin::b10: return "10";
    case IntervalBin::b11: return "11";
    case IntervalBin::b12_plus: return "12+";
  }
  return "?";
}

// delta is the gap in downsampled steps. nullopt = rejected (delta < 5).
inline std::optional<IntervalBin> interval_bin(int delta) {
  if (delta < 5) return std::nullopt;
  if (delta >= 12) return IntervalBin::b12_plus;
  return static_cast<IntervalBin>(delta - 5);
}

// ---- long-horizon window classes ---------------------------------------------

enum class WindowClass { intra_task, inter_task, multi_task };

inline constexpr std::array<WindowClass, 3> kWindowClasses = {
    WindowClass::intra_task, WindowClass::inter_task, WindowClass::multi_task};

// Report alias: S / M / L.
inline std::string_view to_label(WindowClass w) {
  switch (w) {
    case WindowClass::intra_task: return "S";
    case WindowClass::inter_task: return "M";
    case WindowClass::multi_task: return "L";
  }
  return "?";
}

inline std::string_view window_name(WindowClass w) {
  switch (w) {
    case WindowClass::intra_task: return "intra-task";
    case WindowClass::inter_task: return "inter-task";
    case WindowClass::multi_task: return "multi-task";
  }
  return "?";
}

// Classifies a temporally ordered pair by subtask distance: phi_b comes from
// the later frame, so phi_b >= phi_a must hold.
inline WindowClass classify_window(int phi_a, int phi_b) {
  if (phi_a < 1 || phi_b < 1) {
    throw Error("subtask indices are 1-based, got (" + std::to_string(phi_a) +
                ", " + std::to_string(phi_b) + ")");
  }
  if (phi_b < phi_a) {
    throw OrderViolation("phi_b (" + std::to_string(phi_b) +
                         ") precedes phi_a (" + std::to_string(phi_a) + ")");
  }
  if (phi_b == phi_a) return WindowClass::intra_task;
  if (phi_b == phi_a + 1) return WindowClass::inter_task;
  return WindowClass::multi_task;
}

// ---- pair enumeration --------------------------------------------------------

using LevelTag = std::variant<IntervalBin, WindowClass>;

inline bool is_short(const LevelTag& level) {
  return std::holds_alternative<IntervalBin>(level);
}

inline std::string_view level_label(const LevelTag& level) {
  return is_short(level) ? "short" : "long";
}

inline std::string_view bin_or_window_label(const LevelTag& level) {
  if (const auto* b = std::get_if<IntervalBin>(&level)) return to_label(*b);
  return to_label(std::get<WindowClass>(level));
}

struct ShortPair {
  FrameRef earlier;
  FrameRef later;
  IntervalBin bin;
};

struct LongPair {
  FrameRef earlier;
  FrameRef later;
  WindowClass window;
};

namespace detail_sampling {

// Partial Fisher-Yates: the first k slots, in selection order.
template <class T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t k,
                                        detail::CounterRng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

inline const FrameRef& frame_at(const Trajectory& t, int raw_index) {
  if (raw_index < 0 || raw_index >= static_cast<int>(t.frames.size())) {
    throw OutOfRange("raw frame index " + std::to_string(raw_index) +
                     " outside trajectory \"" + t.id + "\"");
  }
  return t.frames[static_cast<std::size_t>(raw_index)];
}

}  // namespace detail_sampling

// Up to quota_per_bin pairs per bin, drawn uniformly without replacement from
// all kept-frame pairs whose downsampled gap falls in that bin. Output order
// is (bin order, draw order). Draws are keyed on (seed, trajectory, bin), so
// a bin's sample does not depend on any other bin.
inline std::vector<ShortPair> enumerate_short_pairs(const Trajectory& t,
                                                    const SampledSequence& seq,
                                                    int quota_per_bin,
                                                    std::uint64_t seed) {
  if (quota_per_bin < 0) throw Error("quota_per_bin must be >= 0");
  std::vector<ShortPair> out;
  if (quota_per_bin == 0 || seq.kept_indices.size() < 2) return out;

  std::array<std::vector<std::pair<int, int>>, 8> buckets;
  const int m = static_cast<int>(seq.kept_indices.size());
  for (int p = 0; p < m; ++p) {
    for (int q = p + 5; q < m; ++q) {
      auto bin = interval_bin(q - p);
      if (bin) buckets[static_cast<std::size_t>(*bin)].push_back({p, q});
    }
  }
  for (IntervalBin bin : kIntervalBins) {
    auto& bucket = buckets[static_cast<std::size_t>(bin)];
    detail::CounterRng rng(seed, "short|" + t.id + "|" + std::string(to_label(bin)));
    auto drawn = detail_sampling::draw_without_replacement(
        std::move(bucket), static_cast<std::size_t>(quota_per_bin), rng);
    for (const auto& [p, q] : drawn) {
      out.push_back({detail_sampling::frame_at(t, seq.kept_indices[static_cast<std::size_t>(p)]),
                     detail_sampling::frame_at(t, seq.kept_indices[static_cast<std::size_t>(q)]),
                     bin});
    }
  }
  return out;
}

// Per-window uniform sampling without replacement, windows classified via the
// subtask index of the two raw frame indices.
inline std::vector<LongPair> enumerate_long_pairs(const Trajectory& t,
                                                  const SampledSequence& seq,
                                                  const SubtaskSkeleton& skeleton,
                                                  int quota_per_window,
                                                  std::uint64_t seed) {
  if (quota_per_window < 0) throw Error("quota_per_window must be >= 0");
  if (skeleton.subtasks.empty()) throw NoSkeleton(t.id);
  std::vector<LongPair> out;
  if (quota_per_window == 0 || seq.kept_indices.size() < 2) return out;

  std::array<std::vector<std::pair<int, int>>, 3> buckets;
  const int m = static_cast<int>(seq.kept_indices.size());
  std::vector<int> phi(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p) {
    phi[static_cast<std::size_t>(p)] =
        subtask_index(skeleton, seq.kept_indices[static_cast<std::size_t>(p)]);
  }
  for (int p = 0; p < m; ++p) {
    for (int q = p + 1; q < m; ++q) {
      WindowClass w = classify_window(phi[static_cast<std::size_t>(p)],
                                      phi[static_cast<std::size_t>(q)]);
      buckets[static_cast<std::size_t>(w)].push_back({p, q});
    }
  }
  for (WindowClass w : kWindowClasses) {
    auto& bucket = buckets[static_cast<std::size_t>(w)];
    detail::CounterRng rng(seed, "long|" + t.id + "|" + std::string(to_label(w)));
    auto drawn = detail_sampling::draw_without_replacement(
        std::move(bucket), static_cast<std::size_t>(quota_per_window), rng);
    for (const auto& [p, q] : drawn) {
      out.push_back({detail_sampling::frame_at(t, seq.kept_indices[static_cast<std::size_t>(p)]),
                     detail_sampling::frame_at(t, seq.kept_indices[static_cast<std::size_t>(q)]),
                     w});
    }
  }
  return out;
}

// ---- bidirectional orientation -----------------------------------------------

struct OrientedPair {
  FrameRef img1;
  FrameRef img2;
  Direction direction = Direction::forward;
  Pick y_gt = Pick::img2;
  LevelTag level = IntervalBin::b5;
  std::string task_name;
  std::optional<SubtaskSkeleton> skeleton;
};

struct PairMeta {
  LevelTag level;
  std::string task_name;
  std::optional<SubtaskSkeleton> skeleton;
};

// Emits the forward and inverse presentation of one temporally ordered pair.
// The later frame is the ground-truth answer in both: img2 forward, img1
// inverse, which forces an exact 50/50 label balance over any oriented set.
inline std::pair<OrientedPair, OrientedPair> orient(const FrameRef& earlier,
                                                    const FrameRef& later,
                                                    const PairMeta& meta) {
  if (earlier.index == later.index && earlier.trajectory_id == later.trajectory_id) {
    throw EqualFrames("cannot orient a pair of identical frames (index " +
                      std::to_string(earlier.index) + ")");
  }
  if (later.index < earlier.index) {
    throw OrderViolation("later frame index " + std::to_string(later.index) +
                         " precedes earlier frame index " +
                         std::to_string(earlier.index));
  }
  OrientedPair forward{earlier, later, Direction::forward, Pick::img2,
                       meta.level,     meta.task_name,     meta.skeleton};
  OrientedPair inverse{later,   earlier, Direction::inverse, Pick::img1,
                       meta.level, meta.task_name, meta.skeleton};
  return {std::move(forward), std::move(inverse)};
}

}  // namespace egopair
