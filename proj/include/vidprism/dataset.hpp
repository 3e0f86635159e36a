// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidprism/tensor.hpp"

namespace vidprism {

/// One clip's frame features, [T x D], time-major.
struct FeatureSequence {
  Tensor frames;
  std::uint32_t label = 0;
  std::string clip_id;

  std::size_t length() const { return frames.dim(0); }
};

struct Dataset {
  std::vector<FeatureSequence> clips;
  std::size_t num_classes = 0;
  std::size_t dim = 0;

  /// Throws InconsistencyError on mixed widths, out-of-range labels or
  /// non-finite values.
  void validate() const;
  std::size_t size() const noexcept { return clips.size(); }
};

// VPF ("VPFT") layout, all integers u32 little-endian:
//   magic "VPFT" | version = 1 | record count | D
//   per record: T | label | clip_id byte length | clip_id | T*D float32 LE
// Values are stored as float32 and widened to float64 on load.
inline constexpr char kVpfMagic[4] = {'V', 'P', 'F', 'T'};
inline constexpr std::uint32_t kVpfVersion = 1;
inline constexpr std::size_t kVpfHeaderBytes = 16;

std::vector<unsigned char> encode_vpf(const Dataset& ds);
Dataset decode_vpf(const std::vector<unsigned char>& bytes);

/// Writes via a temporary sibling file and rename, so a failed write never
/// leaves a partial file at `path`.
void write_vpf(const Dataset& ds, const std::filesystem::path& path);
Dataset read_vpf(const std::filesystem::path& path);

}  // namespace vidprism
