// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace lec {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// 64-bit FNV-1a. Used for content ids and set fingerprints, not for security.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Expands one base seed into independent streams.
///
/// h0 = splitmix64(base ^ fnv1a64(stream)); h_{i+1} = splitmix64(h_i ^ splitmix64(coord_i)).
/// Every random draw in the pipeline is keyed this way by what it is for
/// ("split", "subsample", ...) and where it sits in the grid, so re-running a
/// subset of cells reproduces exactly the numbers of a full run.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::initializer_list<std::uint64_t> coords = {}) noexcept;

std::string hex64(std::uint64_t value);

// Deterministic across standard libraries: the engine is fully specified and
// the distributions below are implemented here rather than taken from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lec
