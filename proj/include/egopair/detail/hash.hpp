// Stable 64-bit hashing and a counter-based seeded generator. Both are
// fixed-algorithm so that ids and draws are identical across platforms
// and across runs.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace egopair::detail {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// Counter-based generator: value i is a pure function of (seed, domain, i).
// Streams keyed on different domains never interact, so draw sequences do
// not depend on how work is interleaved across trajectories or bins.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view domain)
      : key_(mix64(mix64(seed) ^ fnv1a64(domain))) {}

  std::uint64_t value_at(std::uint64_t i) const {
    return mix64(key_ ^ (0xA0761D6478BD642FULL * (i + 1)));
  }

  double unit_at(std::uint64_t i) const {
    return static_cast<double>(value_at(i) >> 11) * 0x1.0p-53;
  }

  std::uint64_t next_u64() { return value_at(counter_++); }

  // Uniform in [0, bound) via 128-bit multiply reduction.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace egopair::detail
