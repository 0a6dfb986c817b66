#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace kiln {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kIterationMultiplier = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kTaskMultiplier = 0xBF58476D1CE4E5B9ULL;

// Iteration tags reserved for non-burst streams.
inline constexpr std::uint32_t kSweepSeedTag = 0xFFFF;
inline constexpr std::uint32_t kInitialConfigTag = 0xFFFE;

// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// One SplitMix64 step from state `x`: advance by the golden gamma, then mix.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  return mix64(x + kGoldenGamma);
}

/// Seed for map task `task_index` of burst `iteration`.
///
/// Bit-exact: SplitMix64(master ^ iteration*0x9E37... ^ task_index*0xBF58...).
/// Injective over (iteration, task_index) in [0, 2^16)^2 for the seeds we scan.
constexpr std::uint64_t derive_task_seed(std::uint64_t master_seed, std::uint32_t iteration,
                                         std::uint32_t task_index) noexcept {
  return splitmix64(master_seed ^ (std::uint64_t{iteration} * kIterationMultiplier) ^
                    (std::uint64_t{task_index} * kTaskMultiplier));
}

/// Sequential SplitMix64 stream. Every random draw in the project comes from
/// one of these, so runs replay identically in any language.
class SplitMix64 {
public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }
  constexpr std::uint64_t operator()() noexcept { return next(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // floor(uniform() * n), n > 0.
  constexpr std::size_t index(std::size_t n) noexcept {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

  constexpr std::uint64_t state() const noexcept { return state_; }

private:
  std::uint64_t state_;
};

}  // namespace kiln
