// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace prcy::rng {

// Every random quantity in the project flows through the SplitMix64 finalizer
// below, keyed by a seed derived from (master seed, label, index).  Streams
// are therefore reproducible across platforms and independent of evaluation
// order; nothing uses <random> distributions, whose outputs are
// implementation-defined.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

// FNV-1a, used only to fold stream labels into seeds.
constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// Child-seed derivation.  One fixed formula everywhere, so that component
// streams never collide and reseeding one component leaves the others alone.
constexpr std::uint64_t derive(std::uint64_t master, std::string_view label,
                               std::uint64_t index = 0) {
  return mix64(master ^ mix64(hash_label(label) ^ mix64(index + kGolden)));
}

// Counter-addressed stream: draw i is a pure function of (key, i), so filling
// a matrix by flat position is order-independent and trivially parallel.
class Counter {
 public:
  explicit Counter(std::uint64_t key) : key_(key) {}

  std::uint64_t bits(std::uint64_t i) const { return mix64(key_ + (i + 1) * kGolden); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform(std::uint64_t i) const {
    return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; draw i consumes counters 2i and 2i+1.
  double gaussian(std::uint64_t i) const {
    const double u1 = static_cast<double>((bits(2 * i) >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Sequential stream for shuffles and ad-hoc draws where a counter would be
// awkward.  Same generator, advancing key.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double gaussian() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased draw from [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  // Fisher-Yates.  std::shuffle is implementation-defined, so roll our own.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace prcy::rng
