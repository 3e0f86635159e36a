// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace vidprism {

/// Counter-based 64-bit generator. Each draw is a SplitMix64 finalizer applied
/// to (key + counter * golden), so streams derived with split() are
/// independent of how many values the parent has produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept;
  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Child generator keyed by `stream`; does not advance this generator.
  Rng split(std::uint64_t stream) const noexcept;
  Rng split(std::string_view label) const noexcept;

  template <class T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  struct Key {};
  Rng(Key, std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
/// FNV-1a; used to derive per-name streams.
std::uint64_t hash_label(std::string_view label) noexcept;

}  // namespace vidprism
