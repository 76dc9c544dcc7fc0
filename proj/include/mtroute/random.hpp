#pragma once

// Portable randomness. The standard <random> engines are fully specified, but
// the distributions are not, so uniform/normal/Gumbel variates are derived
// here from raw 64-bit outputs. Keyed draws (`KeyedStream`) are pure
// functions of their key, which is what the simulated backends need.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace mtroute {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b));
}

template <typename... Rest>
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b, Rest... rest) noexcept {
  return mix(mix(a, b), rest...);
}

// Uniform in [0, 1) with 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1): never returns 0, so log() is always finite.
constexpr double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double box_muller(std::uint64_t a, std::uint64_t b) noexcept {
  const double u1 = to_open_unit(a);
  const double u2 = to_unit(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double uniform01(Rng& rng) { return to_unit(rng()); }

inline double standard_normal(Rng& rng) {
  const auto a = rng();
  const auto b = rng();
  return box_muller(a, b);
}

inline double standard_gumbel(Rng& rng) { return -std::log(-std::log(to_open_unit(rng()))); }

// Uniform integer in [0, n) by rejection, portable across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const auto x = rng();
    if (x < limit) return x % n;
  }
}

// A counter-based stream of draws determined entirely by `key`.
class KeyedStream {
 public:
  explicit constexpr KeyedStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next_bits() noexcept { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }
  constexpr double uniform() noexcept { return to_unit(next_bits()); }
  double normal() noexcept {
    const auto a = next_bits();
    const auto b = next_bits();
    return box_muller(a, b);
  }
  // Uniform integer in [0, n).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
      const auto x = next_bits();
      if (x < limit) return x % n;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mtroute
