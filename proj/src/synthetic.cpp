// SPDX-License-Identifier: Apache-2.0
#include "vidprism/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vidprism/errors.hpp"
#include "vidprism/random.hpp"

namespace vidprism {

void SyntheticSpec::validate() const {
  if (num_classes == 0 || clips_per_class == 0 || frames == 0) {
    throw ConfigError("synthetic spec: num_classes, clips_per_class and frames must be positive");
  }
  if (content_axes == 0 || motion_frequencies.empty()) {
    throw ConfigError("synthetic spec: need at least one content axis and one motion frequency");
  }
  if (content_axes * motion_frequencies.size() < num_classes) {
    throw ConfigError("synthetic spec: content_axes * |motion_frequencies| = " +
                      std::to_string(content_axes * motion_frequencies.size()) + " < num_classes " +
                      std::to_string(num_classes));
  }
  auto freqs = motion_frequencies;
  std::sort(freqs.begin(), freqs.end());
  if (std::adjacent_find(freqs.begin(), freqs.end()) != freqs.end()) {
    throw ConfigError("synthetic spec: motion frequencies must be distinct");
  }
  if (content_axes + motion_channels > dim) {
    throw ConfigError("synthetic spec: content_axes + motion_channels = " +
                      std::to_string(content_axes + motion_channels) + " exceeds dim " + std::to_string(dim));
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synthetic spec: noise_sigma must be finite and non-negative");
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.dim = spec.dim;
  const Rng root(spec.seed);
  const std::size_t motion_begin = spec.content_axes;
  const std::size_t motion_end = spec.content_axes + spec.motion_channels;
  const std::string layout = "content[0," + std::to_string(motion_begin) + ")-motion[" + std::to_string(motion_begin) +
                             "," + std::to_string(motion_end) + ")";
  const double T = static_cast<double>(spec.frames);

  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const std::size_t axis = c % spec.content_axes;
    const std::size_t motion = c / spec.content_axes;
    const double freq = spec.motion_frequencies[motion];
    for (std::size_t k = 0; k < spec.clips_per_class; ++k) {
      Rng rng = root.split(c).split(k);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      Tensor frames({spec.frames, spec.dim}, 0.0);
      for (std::size_t t = 0; t < spec.frames; ++t) {
        frames.at(t, axis) += 1.0;
        for (std::size_t j = motion_begin; j < motion_end; ++j) {
          const double shift = static_cast<double>(j - motion_begin) * std::numbers::pi / 2.0;
          frames.at(t, j) += std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / T + phase + shift);
        }
      }
      if (spec.noise_sigma > 0.0) {
        for (double& v : frames.data()) v += spec.noise_sigma * rng.normal();
      }
      for (double& v : frames.data()) v = static_cast<double>(static_cast<float>(v));
      FeatureSequence clip;
      clip.frames = std::move(frames);
      clip.label = static_cast<std::uint32_t>(c);
      clip.clip_id = "syn-" + layout + "-c" + std::to_string(c) + "-a" + std::to_string(axis) + "-m" +
                     std::to_string(motion) + "-i" + std::to_string(k);
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

}  // namespace vidprism
