#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace flowslm {

/// 64-bit FNV-1a. Stable across platforms; used for seed derivation and
/// artifact hashes.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random source. Distributions are implemented here rather
/// than through <random> adaptors so that draws are identical across standard
/// library implementations and no hidden state (e.g. a cached second normal)
/// escapes serialization.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  /// Independent stream derived from this stream's seed material and a name.
  static Rng derive(std::uint64_t seed, std::string_view name) {
    return Rng(splitmix64(seed ^ fnv1a(name)));
  }
  static Rng derive(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-free rejection; n is always small here.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  /// Number of failures before the first success, plus one (support {1,2,...}).
  int geometric_at_least_one(double stop_prob);

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace flowslm
