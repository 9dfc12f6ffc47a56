#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace osrpc {

inline std::uint64_t splitmix64_next(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Mixes a base seed with a list of tags. Used for the documented counter
// scheme: every chain / replicate / sweep-step stream is derived from the
// root seed plus integer tags, so runs are reproducible regardless of
// scheduling and skipped steps never shift other streams.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = base;
  (void)splitmix64_next(s);
  for (std::uint64_t t : tags) {
    s ^= t + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2);
    (void)splitmix64_next(s);
  }
  return splitmix64_next(s);
}

// xoshiro256++ with splitmix64 seeding. Identical (seed, stream_id) pairs
// produce bitwise-identical sequences.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t sm = derive_seed(seed, {stream_id});
    for (auto& w : s_) w = splitmix64_next(sm);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

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

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1): never returns 0 (safe under log()).
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  // Uniform on (a, b).
  double uniform_in(double a, double b) { return a + (b - a) * uniform_pos(); }

  // Standard normal via Box-Muller, second value cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Standard exponential.
  double exponential() { return -std::log(uniform_pos()); }

  // Integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    std::uint64_t threshold = (0ull - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace osrpc
