#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace t2iaudit {

struct SeedLabel {
  std::string_view label;
  std::uint64_t value;
};

// Derives a child seed from a base seed and an ordered, labelled context.
// Pure and platform-stable: only integer mixing, no library RNG state.
// Throws AuditError(InvalidArgument) on an empty context.
std::uint64_t derive_seed(std::uint64_t base_seed, std::span<const SeedLabel> context);
std::uint64_t derive_seed(std::uint64_t base_seed, std::initializer_list<SeedLabel> context);

// 64-bit FNV-1a; used to turn strings into seed-context values.
std::uint64_t fnv1a64(std::string_view text) noexcept;

// splitmix64 finalizer (a bijection on 64-bit words).
std::uint64_t mix64(std::uint64_t x) noexcept;

// Seeded variate source. The engine is std::mt19937_64 (fully specified by the
// standard); the uniform and normal transforms are done here so that draws are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }
  // Standard normal via Box-Muller (one variate per call).
  double normal() noexcept;
  std::uint64_t next_u64() noexcept { return engine_(); }
  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::mt19937_64 engine_;
};

}  // namespace t2iaudit
