#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace hifm {

// Identifies one reproducible random stream. Identical (seed, stream) pairs
// yield identical draw sequences; distinct stream ids give independent
// sequences that may be consumed concurrently.
struct RngHandle {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

namespace detail {

// SplitMix64 finalizer; full-period bijective mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ seeded from (seed, stream) via SplitMix64. Cheap to construct,
// so per-observation streams can be derived on the fly inside parallel loops.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t sm = seed ^ detail::mix64(stream);
    for (auto& word : state_) {
      sm += 0x9e3779b97f4a7c15ull;
      word = detail::mix64(sm);
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
      state_[0] = 0x9e3779b97f4a7c15ull;
    }
  }

  explicit Rng(RngHandle h) : Rng(h.seed, h.stream) {}

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns 0 or 1, so logs are safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Marsaglia's polar method; the spare variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

 private:
  std::array<std::uint64_t, 4> state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic derived stream: same handle and tags always map to the same
// independent stream, regardless of execution order. Used to key per-iteration
// and per-observation substreams inside the sampler.
inline RngHandle substream(RngHandle h, std::uint64_t a, std::uint64_t b = 0,
                           std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t key = h.stream;
  key = detail::mix64(key ^ detail::mix64(a ^ 0x890df5a716c8d6b1ull));
  key = detail::mix64(key ^ detail::mix64(b ^ 0x2545f4914f6cdd1dull));
  key = detail::mix64(key ^ detail::mix64(c ^ 0x9337210f6c4419d7ull));
  key = detail::mix64(key ^ detail::mix64(d ^ 0x41c64e6da3bc0074ull));
  return RngHandle{h.seed, key};
}

inline Rng substream_rng(RngHandle h, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0, std::uint64_t d = 0) {
  return Rng(substream(h, a, b, c, d));
}

}  // namespace hifm
