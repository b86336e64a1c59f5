// Copyright 2026 The RAFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace raft {

/// SplitMix64 (Steele, Lea & Flood 2014). Every random draw in the library
/// goes through this generator so that seeds reproduce bit-identical
/// streams on every platform and in other-language ports.
///
/// Derived draws:
///  - uniform():   top 53 bits of next() scaled by 2^-53, in [0, 1)
///  - below(n):    rejection sampling on next() (Lemire-free, plain modulo
///                 with rejection of the biased tail)
///  - normal():    Box-Muller, cosine branch only (no cached spare)
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) noexcept : state_(seed) {}

  uint64_t next() noexcept {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  uint64_t below(uint64_t n);
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  uint64_t state() const noexcept { return state_; }
  void set_state(uint64_t s) noexcept { state_ = s; }

 private:
  uint64_t state_;
};

/// 64-bit FNV-1a.
uint64_t fnv1a64(std::string_view bytes) noexcept;

/// seed_task = base_seed XOR fnv1a64(task_name).
inline uint64_t derive_seed(uint64_t base_seed, std::string_view task_name) noexcept {
  return base_seed ^ fnv1a64(task_name);
}

/// Fisher-Yates shuffle of [0, n) driven by `rng`.
std::vector<size_t> random_permutation(size_t n, SplitMix64& rng);

}  // namespace raft
