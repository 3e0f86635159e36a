// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vidprism/dataset.hpp"

namespace vidprism {

/// Class c is the pair (content a = c % content_axes, motion m = c / content_axes).
/// A clip of class (a, m) is e_a on every frame, plus a sinusoid with
/// motion_frequencies[m] cycles per clip and a random phase on the motion
/// block, plus N(0, noise_sigma^2) on every channel.
///
/// Channel layout: content [0, content_axes), motion
/// [content_axes, content_axes + motion_channels); the remaining channels
/// carry noise only. Motion channel j is shifted by j * pi/2, so adjacent
/// channels form a quadrature pair.
struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t clips_per_class = 32;
  std::size_t frames = 32;
  std::size_t dim = 64;
  std::size_t content_axes = 4;
  std::vector<double> motion_frequencies{1.0, 4.0};
  std::size_t motion_channels = 4;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the broken invariant.
  void validate() const;
};

/// Deterministic for a fixed spec. Values are rounded to float32 so the
/// dataset survives a VPF round trip unchanged.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace vidprism
