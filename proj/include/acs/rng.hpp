#pragma once

#include <cstdint>

namespace acs {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th draw of a stream is
/// mix64(seed + (i + 1) * 0x9e3779b97f4a7c15), i.e. splitmix64 with the state
/// exposed as an explicit counter. Streams are fully reproducible from
/// (seed, counter) and trivially portable across languages.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(seed_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses the multiply-high reduction.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Derive an independent stream seed from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(seed ^ mix64(tag + CounterRng::kGolden));
}

}  // namespace acs
