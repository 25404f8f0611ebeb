// Copyright (c) 2026 The timotion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace timotion {

// Counter-based generator: output i is a stateless mix of (key, i), so streams
// can be split without coordination and results do not depend on call
// interleaving across streams. Same layout as splitmix64 applied to key^f(ctr).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Independent stream derived from this one. Deterministic in (key, tag).
  Rng split(uint64_t tag) const {
    Rng r;
    r.key_ = mix(key_ ^ mix(tag + 0x517cc1b727220a95ull));
    r.counter_ = 0;
    return r;
  }
  // Convenience for naming streams in code ("noise", "timestep", ...).
  Rng split(std::string_view name) const {
    uint64_t h = 1469598103934665603ull;
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return split(h);
  }

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller. Uses two draws per call and keeps no
  // cached state, so the stream position is a pure function of call count.
  double normal();

  uint64_t key() const { return key_; }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace timotion
