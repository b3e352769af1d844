// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace fdconv {

// SplitMix64 (Steele/Lea/Flood). One 64-bit word of state, fixed output
// sequence for a given seed on every platform, so test fixtures and dataset
// generation reproduce bit-identically across implementations.
class SplitMix64 {
 public:
  SplitMix64() : state_(0) {}
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1): top 53 bits scaled by 2^-53, never reaches 1.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). floor(u01 * n) with u01 < 1 stays below n.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
  }

  bool coin() { return (next() >> 63) != 0; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  // Decorrelated child seed for (seed, stream) pairs, e.g. one stream per
  // generated scene index.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 g(seed ^ (0xA0761D6478BD642Full * (stream + 1)));
    g.next();
    return g.next();
  }

 private:
  std::uint64_t state_;
};

}  // namespace fdconv
