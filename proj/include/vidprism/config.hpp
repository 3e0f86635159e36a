// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vidprism/hmoe.hpp"
#include "vidprism/synthetic.hpp"
#include "vidprism/trainer.hpp"

namespace vidprism {

enum class DataSource { synthetic, file };

/// Everything one CLI run needs. `seed` drives data generation, model
/// initialisation, the eval split and batch order.
struct RunConfig {
  std::uint64_t seed = 0;
  DataSource source = DataSource::synthetic;
  std::filesystem::path data_path;
  SyntheticSpec synthetic;
  ModelConfig model;  // dim and num_classes come from the data
  TrainConfig train;
  std::filesystem::path out_dir = "runs/default";

  /// Pushes `seed` into the synthetic spec and the trainer.
  void apply_seed(std::uint64_t s);
};

/// Grammar, one statement per line:
///   # comment
///   [section]
///   key = value        value: 12 | -3.5 | 1e-3 | true | "text" | [2, 4, 8]
/// Keys are checked against a fixed schema; unknown keys, duplicates and
/// type mismatches throw ConfigError with the line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

/// Loads or generates the configured dataset.
Dataset load_dataset(const RunConfig& cfg);

}  // namespace vidprism
