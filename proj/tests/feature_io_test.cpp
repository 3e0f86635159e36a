// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vidprism/dataset.hpp"
#include "vidprism/errors.hpp"
#include "vidprism/synthetic.hpp"

namespace vidprism {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vidprism_feature_io_test";
  fs::create_directories(dir);
  return dir / name;
}

// Two clips, T=2, D=3, assembled byte by byte.
const std::vector<unsigned char> kGolden = {
    'V', 'P', 'F', 'T',                     // magic
    0x01, 0x00, 0x00, 0x00,                 // version
    0x02, 0x00, 0x00, 0x00,                 // records
    0x03, 0x00, 0x00, 0x00,                 // D
    // record 0: T=2, label=0, id "a"
    0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 'a',
    0x00, 0x00, 0x80, 0x3F,                 // 1.0
    0x00, 0x00, 0x00, 0xC0,                 // -2.0
    0x00, 0x00, 0x00, 0x3F,                 // 0.5
    0x00, 0x00, 0x80, 0x3E,                 // 0.25
    0x00, 0x00, 0x40, 0x40,                 // 3.0
    0x00, 0x00, 0x00, 0xBE,                 // -0.125
    // record 1: T=2, label=1, id "bc"
    0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 'b', 'c',
    0x00, 0x00, 0x00, 0x00,                 // 0.0
    0x00, 0x00, 0xC0, 0x3F,                 // 1.5
    0x00, 0x00, 0x80, 0xBF,                 // -1.0
    0x00, 0x00, 0x00, 0x40,                 // 2.0
    0x00, 0x00, 0x80, 0x40,                 // 4.0
    0x00, 0x00, 0x00, 0x41,                 // 8.0
};

Dataset golden_dataset() {
  Dataset ds;
  ds.dim = 3;
  ds.num_classes = 2;
  ds.clips.push_back({Tensor::matrix({{1.0, -2.0, 0.5}, {0.25, 3.0, -0.125}}), 0, "a"});
  ds.clips.push_back({Tensor::matrix({{0.0, 1.5, -1.0}, {2.0, 4.0, 8.0}}), 1, "bc"});
  return ds;
}

TEST(Vpf, GoldenBytes) { EXPECT_EQ(encode_vpf(golden_dataset()), kGolden); }

TEST(Vpf, GoldenDecodeRecoversExactFloats) {
  Dataset ds = decode_vpf(kGolden);
  Dataset expected = golden_dataset();
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim, 3u);
  EXPECT_EQ(ds.num_classes, 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ds.clips[i].clip_id, expected.clips[i].clip_id);
    EXPECT_EQ(ds.clips[i].label, expected.clips[i].label);
    EXPECT_EQ(ds.clips[i].frames, expected.clips[i].frames);
  }
}

TEST(Vpf, EmptyDatasetIsHeaderOnly) {
  Dataset ds;
  ds.dim = 64;
  auto bytes = encode_vpf(ds);
  EXPECT_EQ(bytes.size(), kVpfHeaderBytes);
  auto path = temp_path("empty.vpf");
  write_vpf(ds, path);
  EXPECT_EQ(fs::file_size(path), 16u);
  EXPECT_EQ(read_vpf(path).size(), 0u);
}

TEST(Vpf, EmptyFileIsFormatError) {
  auto path = temp_path("zero_bytes.vpf");
  { std::ofstream f(path, std::ios::binary | std::ios::trunc); }
  EXPECT_THROW(read_vpf(path), FormatError);
}

TEST(Vpf, BadMagicAndVersion) {
  auto bytes = kGolden;
  bytes[0] = 'X';
  EXPECT_THROW(decode_vpf(bytes), FormatError);
  bytes = kGolden;
  bytes[4] = 2;
  EXPECT_THROW(decode_vpf(bytes), FormatError);
}

TEST(Vpf, TruncatedRecordReportsOffset) {
  auto bytes = kGolden;
  bytes.resize(bytes.size() - 3);
  try {
    decode_vpf(bytes);
    FAIL() << "expected CorruptionError";
  } catch (const CorruptionError& e) {
    // Second record's payload starts after its 14-byte prefix.
    EXPECT_EQ(e.offset(), 16u + 13u + 24u + 14u);
  }
  bytes = kGolden;
  bytes.resize(18);
  EXPECT_THROW(decode_vpf(bytes), CorruptionError);
}

TEST(Vpf, TrailingBytesAreInconsistent) {
  auto bytes = kGolden;
  bytes.push_back(0);
  EXPECT_THROW(decode_vpf(bytes), InconsistencyError);
}

TEST(Vpf, MixedWidthsRejectedOnWrite) {
  Dataset ds = golden_dataset();
  ds.clips[1].frames = Tensor({2, 4}, 0.0);
  EXPECT_THROW(encode_vpf(ds), InconsistencyError);
}

TEST(Vpf, FileRoundTripIsByteIdentical) {
  SyntheticSpec spec;
  spec.clips_per_class = 3;
  spec.seed = 5;
  Dataset ds = generate_synthetic(spec);
  auto path = temp_path("roundtrip.vpf");
  write_vpf(ds, path);
  Dataset back = read_vpf(path);
  EXPECT_EQ(encode_vpf(back), encode_vpf(ds));
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back.clips[i].frames, ds.clips[i].frames);
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST(Synthetic, DeterministicForSeed) {
  SyntheticSpec spec;
  spec.clips_per_class = 4;
  spec.seed = 42;
  EXPECT_EQ(encode_vpf(generate_synthetic(spec)), encode_vpf(generate_synthetic(spec)));
  auto other = spec;
  other.seed = 43;
  EXPECT_NE(encode_vpf(generate_synthetic(spec)), encode_vpf(generate_synthetic(other)));
}

TEST(Synthetic, DefaultSpecShape) {
  Dataset ds = generate_synthetic(SyntheticSpec{});
  EXPECT_EQ(ds.size(), 256u);
  EXPECT_EQ(ds.num_classes, 8u);
  EXPECT_EQ(ds.dim, 64u);
  std::vector<int> per_class(8, 0);
  for (const auto& c : ds.clips) {
    ++per_class[c.label];
    EXPECT_EQ(c.frames.shape(), (Shape{32, 64}));
    EXPECT_NE(c.clip_id.find("content[0,4)-motion[4,8)"), std::string::npos);
  }
  for (int n : per_class) EXPECT_EQ(n, 32);
  ds.validate();
}

TEST(Synthetic, NoiselessSingleFrequencyDiffersOnlyInMotionChannels) {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.motion_frequencies = {2.0};
  spec.noise_sigma = 0.0;
  spec.clips_per_class = 2;
  Dataset ds = generate_synthetic(spec);
  for (const auto& clip : ds.clips) {
    const auto axis = clip.label % spec.content_axes;
    for (std::size_t t = 0; t < spec.frames; ++t) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const bool motion = j >= spec.content_axes && j < spec.content_axes + spec.motion_channels;
        if (motion) continue;
        EXPECT_EQ(clip.frames.at(t, j), j == axis ? 1.0 : 0.0);
      }
    }
  }
}

TEST(Synthetic, MotionAveragesOutOverTime) {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.clips_per_class = 2;
  Dataset ds = generate_synthetic(spec);
  for (const auto& clip : ds.clips) {
    for (std::size_t j = spec.content_axes; j < spec.content_axes + spec.motion_channels; ++j) {
      double mean = 0;
      for (std::size_t t = 0; t < spec.frames; ++t) mean += clip.frames.at(t, j);
      EXPECT_NEAR(mean / static_cast<double>(spec.frames), 0.0, 1e-6);
    }
  }
}

TEST(Synthetic, SpecViolationsAreConfigErrors) {
  SyntheticSpec spec;
  spec.motion_frequencies = {1.0, 1.0};
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec = {};
  spec.num_classes = 9;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
  spec = {};
  spec.dim = 6;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

}  // namespace
}  // namespace vidprism
