#pragma once

// Counter-based randomness. Every draw is a pure function of (key, counter),
// so ensembles give identical results for any thread count or scheduling.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace loclab {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

// FNV-1a, 64 bit.
inline constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named seed fan-out: (master, module, check, index) -> stream key. Adding a
/// check never perturbs the streams of other checks.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view module,
                                 std::string_view check, std::uint64_t index) {
  std::uint64_t h = hash_combine(splitmix64(master), hash_string(module));
  h = hash_combine(h, hash_string(check));
  return hash_combine(h, index);
}

/// Uniform in the open interval (0, 1).
inline double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = hash_combine(key, counter);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Exact standard normal via Box-Muller on two counter uniforms.
inline double counter_normal(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t sub = hash_combine(key, 0x6e6f726d616cULL);
  const double u1 = counter_uniform(sub, 2 * counter);
  const double u2 = counter_uniform(sub, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential view over a counter stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  double uniform() { return counter_uniform(key_, counter_++); }
  double normal() { return counter_normal(key_, counter_++); }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace loclab
