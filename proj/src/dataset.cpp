// SPDX-License-Identifier: Apache-2.0
#include "vidprism/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "vidprism/errors.hpp"
#include "vidprism/file_io.hpp"

namespace vidprism {

namespace {

static_assert(std::endian::native == std::endian::little, "VPF I/O assumes a little-endian host");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<unsigned char>& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t narrow_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw FormatError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CorruptionError(std::string("truncated VPF record: expected ") + what, pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Dataset::validate() const {
  for (const auto& clip : clips) {
    if (clip.frames.rank() != 2 || clip.frames.dim(1) != dim) {
      throw InconsistencyError("clip '" + clip.clip_id + "' has shape " + shape_str(clip.frames.shape()) +
                               ", dataset width is " + std::to_string(dim));
    }
    if (clip.label >= num_classes) {
      throw InconsistencyError("clip '" + clip.clip_id + "' label " + std::to_string(clip.label) +
                               " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (!clip.frames.all_finite()) throw InconsistencyError("clip '" + clip.clip_id + "' has non-finite values");
  }
}

std::vector<unsigned char> encode_vpf(const Dataset& ds) {
  for (const auto& clip : ds.clips) {
    if (clip.frames.rank() != 2 || clip.frames.dim(1) != ds.dim) {
      throw InconsistencyError("clip '" + clip.clip_id + "' width differs from dataset width " +
                               std::to_string(ds.dim));
    }
  }
  std::vector<unsigned char> out;
  out.insert(out.end(), std::begin(kVpfMagic), std::end(kVpfMagic));
  put_u32(out, kVpfVersion);
  put_u32(out, narrow_u32(ds.clips.size(), "record count"));
  put_u32(out, narrow_u32(ds.dim, "feature width"));
  for (const auto& clip : ds.clips) {
    put_u32(out, narrow_u32(clip.frames.dim(0), "frame count"));
    put_u32(out, clip.label);
    put_u32(out, narrow_u32(clip.clip_id.size(), "clip id length"));
    out.insert(out.end(), clip.clip_id.begin(), clip.clip_id.end());
    for (double v : clip.frames.data()) put_f32(out, v);
  }
  return out;
}

Dataset decode_vpf(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kVpfMagic, 4) != 0) {
    throw FormatError("not a VPF file: missing 'VPFT' magic");
  }
  if (bytes.size() < kVpfHeaderBytes) throw CorruptionError("truncated VPF header", bytes.size());
  Reader in(bytes);
  in.str(4, "magic");
  const auto version = in.u32("version");
  if (version != kVpfVersion) throw FormatError("unsupported VPF version " + std::to_string(version));
  const auto count = in.u32("record count");
  const auto dim = in.u32("feature width");

  Dataset ds;
  ds.dim = dim;
  ds.clips.reserve(std::min<std::size_t>(count, 1u << 16));
  std::uint32_t max_label = 0;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::size_t record_start = in.pos();
    FeatureSequence clip;
    const auto frames = in.u32("frame count");
    clip.label = in.u32("label");
    const auto id_len = in.u32("clip id length");
    clip.clip_id = in.str(id_len, "clip id bytes");
    const std::size_t values = static_cast<std::size_t>(frames) * dim;
    if (in.remaining() / 4 < values) {
      throw CorruptionError("truncated VPF record " + std::to_string(r) + " ('" + clip.clip_id + "') starting at byte " +
                                std::to_string(record_start),
                            in.pos());
    }
    Tensor t({frames, static_cast<std::size_t>(dim)});
    for (double& v : t.data()) v = static_cast<double>(in.f32("feature value"));
    clip.frames = std::move(t);
    max_label = std::max(max_label, clip.label);
    ds.clips.push_back(std::move(clip));
  }
  if (in.remaining() != 0) {
    throw InconsistencyError(std::to_string(in.remaining()) + " trailing bytes after " + std::to_string(count) +
                             " records; record sizes disagree with header width D=" + std::to_string(dim));
  }
  ds.num_classes = ds.clips.empty() ? 0 : static_cast<std::size_t>(max_label) + 1;
  return ds;
}

void write_vpf(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_vpf(ds);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Dataset read_vpf(const std::filesystem::path& path) { return decode_vpf(read_file_bytes(path)); }

}  // namespace vidprism
