// SPDX-License-Identifier: Apache-2.0
// Drives the vidprism binary end to end.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "vidprism/dataset.hpp"
#include "vidprism/file_io.hpp"

#ifndef VIDPRISM_CLI
#error "VIDPRISM_CLI must name the vidprism executable"
#endif

namespace vidprism {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vidprism_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(VIDPRISM_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file_text(out), read_file_text(err)};
}

fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "run.toml";
  write_file_atomic(path, "seed = 3\n[synthetic]\nnum_classes = 4\nclips_per_class = 4\nframes = 8\ndim = 8\n"
                          "content_axes = 2\nmotion_channels = 2\n[model]\nheads = 2\nrates = [2, 4]\n"
                          "[train]\nepochs = 1\nbatch_size = 4\n" +
                              extra);
  return path;
}

TEST(Cli, GenDefaultsAreDeterministic) {
  auto a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(run("gen --out " + a.string(), a).code, 0);
  ASSERT_EQ(run("gen --out " + b.string(), b).code, 0);
  EXPECT_EQ(read_vpf(a / "dataset.vpf").size(), 256u);
  EXPECT_EQ(read_file_bytes(a / "dataset.vpf"), read_file_bytes(b / "dataset.vpf"));
  ASSERT_EQ(run("gen --seed 1 --out " + b.string(), b).code, 0);
  EXPECT_NE(read_file_bytes(a / "dataset.vpf"), read_file_bytes(b / "dataset.vpf"));
}

TEST(Cli, MalformedConfigExitsTwoWithoutOutput) {
  auto dir = scratch("malformed");
  write_file_atomic(dir / "bad.toml", "[train]\nepochs = \"many\"\n");
  auto r = run("gen --config " + (dir / "bad.toml").string() + " --out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out" / "dataset.vpf"));
  EXPECT_EQ(run("train --config " + (dir / "absent.toml").string(), dir).code, 2);
}

TEST(Cli, MissingDataFileExitsTwo) {
  auto dir = scratch("missing_data");
  write_file_atomic(dir / "run.toml", "[data]\nsource = \"file\"\npath = \"" + (dir / "none.vpf").string() + "\"\n");
  auto r = run("train --config " + (dir / "run.toml").string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(dir / "run_report.json"));
}

TEST(Cli, TrainTwiceGivesIdenticalArtifacts) {
  auto dir = scratch("train");
  auto cfg = write_config(dir);
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (dir / "b").string(), dir).code, 0);
  for (const char* f : {"run_report.json", "train_log.jsonl", "expert_usage.csv", "checkpoint.vpck"}) {
    EXPECT_EQ(read_file_bytes(dir / "a" / f), read_file_bytes(dir / "b" / f)) << f;
  }
  auto report = nlohmann::json::parse(read_file_text(dir / "a" / "run_report.json"));
  EXPECT_EQ(report["config"]["run"]["seed"], 3);
  EXPECT_EQ(report["epochs"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "a" / "timing.json"));
}

TEST(Cli, InspectReportsTraces) {
  auto dir = scratch("inspect");
  auto cfg = write_config(dir, "[dbi]\nthreshold = 1.01\n");
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + dir.string(), dir).code, 0);
  auto r = run("inspect --config " + cfg.string() + " --out " + dir.string() + " --clip 5", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["clip_index"], 5);
  double sum = 0;
  for (double w : j["readout_weights"]) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-6);
  for (const auto& row : j["gate_matrix"]["active"])
    for (const auto& a : row) EXPECT_FALSE(a.get<bool>());
  for (const auto& [rate, s] : j["s_mix"].items()) EXPECT_EQ(s.size(), 8u) << rate;
  EXPECT_EQ(j["merge_traces"].size(), 2u);

  EXPECT_EQ(run("inspect --config " + cfg.string() + " --out " + dir.string() + " --clip 99", dir).code, 2);
  EXPECT_EQ(run("inspect --config " + cfg.string() + " --out " + (dir / "empty").string(), dir).code, 2);
}

TEST(Cli, AblateWritesOneRowPerVariant) {
  auto dir = scratch("ablate");
  auto cfg = write_config(dir);
  const std::vector<std::pair<std::string, std::size_t>> axes = {
      {"aggregation", 4}, {"interaction", 4}, {"combination", 5}};
  for (const auto& [axis, rows] : axes) {
    auto r = run("ablate --axis " + axis + " --config " + cfg.string() + " --out " + dir.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = read_file_text(dir / ("ablation_" + axis + ".csv"));
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rows + 1) << axis;
  }
  auto r = run("ablate --axis depth --config " + cfg.string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("expert_grid"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  auto dir = scratch("usage");
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("ablate", dir).code, 2);
}

}  // namespace
}  // namespace vidprism
