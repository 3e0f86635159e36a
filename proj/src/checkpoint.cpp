// SPDX-License-Identifier: Apache-2.0
#include "vidprism/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "vidprism/errors.hpp"
#include "vidprism/file_io.hpp"

namespace vidprism {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(const std::vector<unsigned char>& in, std::size_t& pos, int bytes) {
  if (in.size() - pos < static_cast<std::size_t>(bytes)) throw CorruptionError("truncated checkpoint", pos);
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += bytes;
  return v;
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("model config: missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("model config: bad type for '") + key + "'");
  }
}

}  // namespace

nlohmann::json to_json(const ModelConfig& cfg) {
  return {
      {"dim", cfg.dim},
      {"num_classes", cfg.num_classes},
      {"heads", cfg.heads},
      {"rates", cfg.rates},
      {"aggregation", to_string(cfg.aggregation)},
      {"combination", to_string(cfg.combination)},
      {"rgsta",
       {{"alpha", cfg.rgsta.alpha},
        {"tau", cfg.rgsta.tau},
        {"delta", cfg.rgsta.delta},
        {"metric_dim", cfg.rgsta.metric_dim},
        {"normalize_scores", cfg.rgsta.normalize_scores}}},
      {"dbi", {{"threshold", cfg.dbi.threshold}, {"kernel", cfg.dbi.kernel}, {"mode", to_string(cfg.dbi.mode)}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.dim = field<std::size_t>(j, "dim");
  cfg.num_classes = field<std::size_t>(j, "num_classes");
  cfg.heads = field<std::size_t>(j, "heads");
  cfg.rates = field<std::vector<std::size_t>>(j, "rates");
  cfg.aggregation = parse_aggregation_mode(field<std::string>(j, "aggregation"));
  cfg.combination = parse_combination_mode(field<std::string>(j, "combination"));
  const auto r = field<nlohmann::json>(j, "rgsta");
  cfg.rgsta.alpha = field<double>(r, "alpha");
  cfg.rgsta.tau = field<double>(r, "tau");
  cfg.rgsta.delta = field<double>(r, "delta");
  cfg.rgsta.metric_dim = field<std::size_t>(r, "metric_dim");
  cfg.rgsta.normalize_scores = field<bool>(r, "normalize_scores");
  const auto d = field<nlohmann::json>(j, "dbi");
  cfg.dbi.threshold = field<double>(d, "threshold");
  cfg.dbi.kernel = field<std::size_t>(d, "kernel");
  cfg.dbi.mode = parse_interaction_mode(field<std::string>(d, "mode"));
  cfg.validate();
  return cfg;
}

std::vector<unsigned char> encode_checkpoint(const Model& model) {
  nlohmann::json header{{"model", to_json(model.config())}, {"seed", model.store().seed()}};
  auto& params = header["parameters"] = nlohmann::json::array();
  for (const auto& p : model.store().parameters()) params.push_back({{"name", p.name}, {"shape", p.var.shape()}});
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : model.store().parameters())
    for (double v : p.var.value().values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

std::unique_ptr<Model> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file");
  std::size_t pos = 4;
  if (get_le(bytes, pos, 4) != kVersion) throw FormatError("unsupported checkpoint version");
  const std::uint64_t len = get_le(bytes, pos, 8);
  if (bytes.size() - pos < len) throw CorruptionError("truncated checkpoint header", pos);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  pos += len;

  std::unique_ptr<Model> model;
  nlohmann::json listed;
  try {
    model = std::make_unique<Model>(model_config_from_json(header.at("model")), header.at("seed").get<std::uint64_t>());
    listed = header.at("parameters");
    for (const auto& entry : listed) {
      entry.at("name").get<std::string>();
      entry.at("shape").get<Shape>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  auto params = model->store().parameters();
  if (listed.size() != params.size()) throw InconsistencyError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].at("name").get<std::string>() != params[i].name ||
        listed[i].at("shape").get<Shape>() != params[i].var.shape()) {
      throw InconsistencyError("checkpoint parameter " + std::to_string(i) + " does not match '" + params[i].name + "'");
    }
    for (double& v : params[i].var.mutable_value().data()) v = std::bit_cast<double>(get_le(bytes, pos, 8));
  }
  if (pos != bytes.size()) throw InconsistencyError("trailing bytes after checkpoint data");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace vidprism
