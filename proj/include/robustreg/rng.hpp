#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace robustreg {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kStreamSalt = 0x6A09E667F3BCC909ULL;

inline constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// SplitMix64: state advances by the golden-ratio increment, output is the
// mixed state. Used only to expand seeds.
struct SplitMix64 {
  std::uint64_t state;
  constexpr std::uint64_t next() {
    state += kGolden;
    return splitmix_mix(state);
  }
};

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Deterministic stream of random draws. A (master_seed, stream_id) pair is
/// expanded via SplitMix64 into the 4-word state of xoshiro256++; distinct
/// stream ids give unrelated streams. Value type: copying clones the stream.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t master_seed, std::uint64_t stream_id = 0)
      : master_(master_seed), stream_(stream_id) {
    detail::SplitMix64 sm{master_seed ^
                          detail::splitmix_mix(stream_id + detail::kStreamSalt)};
    for (auto& w : s_) w = sm.next();
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = detail::kGolden;
  }

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Fresh stream sharing the master seed.
  RandomSource stream(std::uint64_t stream_id) const {
    return RandomSource(master_, stream_id);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (-n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via the polar Box-Muller method; the spare variate is
  /// cached, so normals are consumed from the stream in pairs.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  /// +/-1 from the top bit of the next 64-bit draw (set bit -> -1).
  double rademacher() { return (next_u64() >> 63) ? -1.0 : 1.0; }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t master_ = 0;
  std::uint64_t stream_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stable seed derivation for (grid, trial)-style nested experiments.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b) {
  std::uint64_t h = detail::splitmix_mix(master + detail::kGolden);
  h = detail::splitmix_mix(h ^ (a + detail::kStreamSalt));
  h = detail::splitmix_mix(h ^ (b + detail::kGolden));
  return h;
}

}  // namespace robustreg
