// Keyed random streams. Every (trial, system, subsystem) gets its own stream
// so acquisition choices never shift the draws of other subsystems.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace partial_al {

/// SplitMix64 sequence whose starting state is a hash of (seed, keys...).
class Stream {
 public:
  Stream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> keys)
      : state_(mix(base_seed ^ 0x6a09e667f3bcc909ULL)) {
    for (auto k : keys) state_ = mix(state_ ^ mix(k + 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

/// Tags keep independent uses of one seed apart.
enum StreamTag : std::uint64_t {
  kSubsystemStream = 1,
  kSelectionStream = 2,
  kWorldSeed = 3,
};

}  // namespace partial_al
