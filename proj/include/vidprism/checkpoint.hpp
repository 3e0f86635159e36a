// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidprism/hmoe.hpp"

namespace vidprism {

nlohmann::json to_json(const ModelConfig& cfg);
/// Throws ConfigError on missing or invalid fields.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Checkpoint layout:
//   magic "VPCK" | u32 version = 1 | u64 header length | header JSON
//   | float64 LE parameter values in header order
// The header holds the model config, the init seed and {name, shape} per
// parameter.
std::vector<unsigned char> encode_checkpoint(const Model& model);
std::unique_ptr<Model> decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace vidprism
