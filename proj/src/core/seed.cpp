#include "t2iaudit/seed.hpp"

#include <cmath>
#include <numbers>

#include "t2iaudit/error.hpp"

namespace t2iaudit {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::span<const SeedLabel> context) {
  if (context.empty()) {
    throw AuditError(ErrorCode::InvalidArgument, "derive_seed: context must not be empty");
  }
  // Each absorption step is a bijection of the running state for a fixed
  // input, so contexts differing in one entry cannot collide at that step.
  std::uint64_t h = mix64(base_seed ^ 0x5eed5eed5eed5eedULL);
  for (const auto& item : context) {
    h = mix64(h ^ fnv1a64(item.label));
    h = mix64(h ^ item.value);
  }
  return mix64(h ^ static_cast<std::uint64_t>(context.size()));
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::initializer_list<SeedLabel> context) {
  return derive_seed(base_seed, std::span<const SeedLabel>(context.begin(), context.size()));
}

double Rng::normal() noexcept {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

}  // namespace t2iaudit
