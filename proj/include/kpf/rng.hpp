#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace kpf {

/// xoshiro256** generator. Small state, cheap to construct, which matters
/// because every particle draws from its own stream at every step.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0x9E3779B97F4A7C15ULL) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

/// What a stream is used for; keeps draws for different purposes disjoint.
enum class StreamPurpose : std::uint64_t {
  prior = 1,
  jitter = 2,
  resample = 3,
  inner = 4,
  simulation = 5,
  noise = 6,
  test = 7,
};

/// Stream for (run seed, step, particle, purpose). Identical keys give
/// identical streams regardless of thread count or evaluation order.
inline Xoshiro256 make_stream(std::uint64_t seed, std::uint64_t step, std::uint64_t index,
                              StreamPurpose purpose) {
  std::uint64_t x = seed;
  std::uint64_t h = Xoshiro256::splitmix64(x);
  x = h ^ (step * 0xD1B54A32D192ED03ULL);
  h = Xoshiro256::splitmix64(x);
  x = h ^ (index * 0xAEF17502108EF2D9ULL);
  h = Xoshiro256::splitmix64(x);
  x = h ^ (static_cast<std::uint64_t>(purpose) * 0xF58A5C3E4B8B4A1DULL);
  return Xoshiro256(Xoshiro256::splitmix64(x));
}

}  // namespace kpf

namespace kpf {

/// (seed, step) pair from which per-particle streams are cut.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  Xoshiro256 stream(std::uint64_t index, StreamPurpose purpose) const {
    return make_stream(seed, step, index, purpose);
  }
};

}  // namespace kpf
