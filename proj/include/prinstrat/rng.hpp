#pragma once

#include <array>
#include <cstdint>
#include <cmath>

namespace prinstrat {

/// Seeded, splittable random stream: xoshiro256++ with the state expanded
/// from (seed, stream_id) through splitmix64. The same pair always yields
/// the same draw sequence; distinct stream ids give statistically
/// independent sequences, so chains and replicates can run in parallel
/// without sharing state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
    reseed(seed, stream_id);
  }

  void reseed(std::uint64_t seed, std::uint64_t stream_id) {
    seed_ = seed;
    stream_ = stream_id;
    // Fold the stream id in with a large odd multiplier so distinct
    // (seed, stream) pairs start splitmix64 at distinct states.
    std::uint64_t x = splitmix64_step(seed) + stream_id * 0xBF58476D1CE4E5B9ULL;
    for (auto& w : s_) w = splitmix64_step(x);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9E3779B97F4A7C15ULL;
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); never returns 0.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double theta = 2.0 * 3.14159265358979323846 * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Exponential with rate 1.
  double exponential() { return -std::log(uniform_pos()); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }
  static std::uint64_t splitmix64_step(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace prinstrat
