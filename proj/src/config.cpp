// SPDX-License-Identifier: Apache-2.0
#include "vidprism/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <variant>
#include <vector>

#include "vidprism/errors.hpp"
#include "vidprism/file_io.hpp"

namespace vidprism {

namespace {

using List = std::vector<double>;
using Value = std::variant<std::int64_t, double, bool, std::string, List>;

struct Entry {
  Value value;
  std::size_t line;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

bool parse_number(std::string_view s, Value& out) {
  if (s.empty()) return false;
  const bool is_float = s.find_first_of(".eE") != std::string_view::npos || s == "inf" || s == "nan";
  const char* end = s.data() + s.size();
  if (!is_float) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) return false;
    out = v;
    return true;
  }
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return false;
  out = v;
  return true;
}

Value parse_value(std::string_view s, std::size_t line) {
  if (s.empty()) fail(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') fail(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char c = s[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else if (s[i] == '"') {
        fail(line, "stray quote inside string");
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.front() == '[') {
    if (s.back() != ']') fail(line, "unterminated list");
    List out;
    std::string_view body = trim(s.substr(1, s.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      std::string_view item = trim(body.substr(0, comma));
      Value v;
      if (!parse_number(item, v)) fail(line, "list items must be numbers, got '" + std::string(item) + "'");
      out.push_back(std::holds_alternative<double>(v) ? std::get<double>(v)
                                                      : static_cast<double>(std::get<std::int64_t>(v)));
      if (comma == std::string_view::npos) break;
      body = trim(body.substr(comma + 1));
      if (body.empty()) fail(line, "trailing comma in list");
    }
    return out;
  }
  Value v;
  if (!parse_number(s, v)) fail(line, "cannot parse value '" + std::string(s) + "'");
  return v;
}

std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

std::map<std::string, Entry> tokenize(std::string_view text) {
  std::map<std::string, Entry> out;
  std::string section;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string raw = strip_comment(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(lineno, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(lineno, "expected 'key = value'");
    const std::string key = std::string(trim(line.substr(0, eq)));
    if (key.empty()) fail(lineno, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) fail(lineno, "duplicate key '" + full + "'");
    out.emplace(full, Entry{parse_value(trim(line.substr(eq + 1)), lineno), lineno});
  }
  return out;
}

// Typed setters keyed by full name.
class Schema {
 public:
  explicit Schema(RunConfig& cfg);

  void apply(const std::map<std::string, Entry>& entries) {
    for (const auto& [key, entry] : entries) {
      auto it = setters_.find(key);
      if (it == setters_.end()) fail(entry.line, "unknown key '" + key + "'");
      try {
        it->second(entry.value);
      } catch (const ConfigError& e) {
        fail(entry.line, key + ": " + e.what());
      }
    }
  }

 private:
  std::map<std::string, std::function<void(const Value&)>> setters_;

  static std::int64_t as_int(const Value& v) {
    if (!std::holds_alternative<std::int64_t>(v)) throw ConfigError("expected an integer");
    return std::get<std::int64_t>(v);
  }
  static std::size_t as_count(const Value& v) {
    const auto i = as_int(v);
    if (i < 0) throw ConfigError("expected a non-negative integer");
    return static_cast<std::size_t>(i);
  }
  static double as_float(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
    if (!std::holds_alternative<double>(v)) throw ConfigError("expected a number");
    return std::get<double>(v);
  }
  static bool as_bool(const Value& v) {
    if (!std::holds_alternative<bool>(v)) throw ConfigError("expected true or false");
    return std::get<bool>(v);
  }
  static std::string as_string(const Value& v) {
    if (!std::holds_alternative<std::string>(v)) throw ConfigError("expected a quoted string");
    return std::get<std::string>(v);
  }
  static List as_list(const Value& v) {
    if (!std::holds_alternative<List>(v)) throw ConfigError("expected a list");
    return std::get<List>(v);
  }

  void count(const std::string& key, std::size_t& field) {
    setters_[key] = [&field](const Value& v) { field = as_count(v); };
  }
  void real(const std::string& key, double& field) {
    setters_[key] = [&field](const Value& v) { field = as_float(v); };
  }
};

Schema::Schema(RunConfig& cfg) {
  setters_["seed"] = [&cfg](const Value& v) { cfg.seed = static_cast<std::uint64_t>(as_count(v)); };
  setters_["data.source"] = [&cfg](const Value& v) {
    const auto s = as_string(v);
    if (s == "synthetic") cfg.source = DataSource::synthetic;
    else if (s == "file") cfg.source = DataSource::file;
    else throw ConfigError("expected \"synthetic\" or \"file\"");
  };
  setters_["data.path"] = [&cfg](const Value& v) { cfg.data_path = as_string(v); };
  setters_["output.dir"] = [&cfg](const Value& v) { cfg.out_dir = as_string(v); };

  auto& syn = cfg.synthetic;
  count("synthetic.num_classes", syn.num_classes);
  count("synthetic.clips_per_class", syn.clips_per_class);
  count("synthetic.frames", syn.frames);
  count("synthetic.dim", syn.dim);
  count("synthetic.content_axes", syn.content_axes);
  count("synthetic.motion_channels", syn.motion_channels);
  real("synthetic.noise_sigma", syn.noise_sigma);
  setters_["synthetic.motion_frequencies"] = [&syn](const Value& v) { syn.motion_frequencies = as_list(v); };

  auto& m = cfg.model;
  count("model.heads", m.heads);
  setters_["model.rates"] = [&m](const Value& v) {
    m.rates.clear();
    for (double r : as_list(v)) {
      if (!(r >= 1.0) || r != static_cast<double>(static_cast<std::size_t>(r))) {
        throw ConfigError("rates must be positive integers");
      }
      m.rates.push_back(static_cast<std::size_t>(r));
    }
  };
  setters_["model.aggregation"] = [&m](const Value& v) { m.aggregation = parse_aggregation_mode(as_string(v)); };
  setters_["model.combination"] = [&m](const Value& v) { m.combination = parse_combination_mode(as_string(v)); };
  real("rgsta.alpha", m.rgsta.alpha);
  real("rgsta.tau", m.rgsta.tau);
  real("rgsta.delta", m.rgsta.delta);
  count("rgsta.metric_dim", m.rgsta.metric_dim);
  setters_["rgsta.normalize_scores"] = [&m](const Value& v) { m.rgsta.normalize_scores = as_bool(v); };
  real("dbi.threshold", m.dbi.threshold);
  count("dbi.kernel", m.dbi.kernel);
  setters_["dbi.interaction"] = [&m](const Value& v) { m.dbi.mode = parse_interaction_mode(as_string(v)); };

  auto& t = cfg.train;
  real("loss.lambda_rank", t.loss.rank);
  real("loss.lambda_div", t.loss.div);
  real("loss.lambda_gate", t.loss.gate);
  real("loss.rank_temperature", t.loss.temperature);
  count("train.epochs", t.epochs);
  count("train.batch_size", t.batch_size);
  real("train.learning_rate", t.adam.learning_rate);
  real("train.beta1", t.adam.beta1);
  real("train.beta2", t.adam.beta2);
  real("train.eps", t.adam.eps);
  real("train.weight_decay", t.adam.weight_decay);
  count("train.eval_every", t.eval_every);
  real("train.eval_fraction", t.eval_fraction);
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synthetic.seed = s;
  train.seed = s;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  const auto entries = tokenize(text);
  Schema(cfg).apply(entries);
  if (cfg.source == DataSource::file && cfg.data_path.empty()) {
    throw ConfigError("config: data.source = \"file\" requires data.path");
  }
  if (cfg.source == DataSource::synthetic && !cfg.data_path.empty()) {
    throw ConfigError("config: data.path is set but data.source is \"synthetic\"; choose one data source");
  }
  if (cfg.source == DataSource::file) {
    for (const auto& [key, entry] : entries) {
      if (key.rfind("synthetic.", 0) == 0) {
        throw ConfigError("config line " + std::to_string(entry.line) + ": " + key +
                          " given but data.source is \"file\"");
      }
    }
  }
  if (cfg.out_dir.empty()) throw ConfigError("config: output.dir must not be empty");
  cfg.apply_seed(cfg.seed);
  if (cfg.source == DataSource::synthetic) cfg.synthetic.validate();
  cfg.train.validate();
  // dim and classes are data-dependent; validate the rest with placeholders.
  ModelConfig probe = cfg.model;
  probe.dim = probe.heads ? probe.heads : 1;
  probe.num_classes = 1;
  probe.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  return parse_run_config(read_file_text(path));
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j{{"seed", cfg.seed},
                   {"data", {{"source", cfg.source == DataSource::file ? "file" : "synthetic"}}},
                   {"model",
                    {{"heads", cfg.model.heads},
                     {"rates", cfg.model.rates},
                     {"aggregation", to_string(cfg.model.aggregation)},
                     {"combination", to_string(cfg.model.combination)}}},
                   {"train", to_json(cfg.train)}};
  if (cfg.source == DataSource::file) {
    j["data"]["path"] = cfg.data_path.string();
  } else {
    const auto& s = cfg.synthetic;
    j["data"]["synthetic"] = {{"num_classes", s.num_classes},         {"clips_per_class", s.clips_per_class},
                              {"frames", s.frames},                   {"dim", s.dim},
                              {"content_axes", s.content_axes},       {"motion_frequencies", s.motion_frequencies},
                              {"motion_channels", s.motion_channels}, {"noise_sigma", s.noise_sigma}};
  }
  return j;
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.source == DataSource::synthetic) return generate_synthetic(cfg.synthetic);
  if (!std::filesystem::exists(cfg.data_path)) {
    throw ConfigError("data file '" + cfg.data_path.string() + "' does not exist");
  }
  return read_vpf(cfg.data_path);
}

}  // namespace vidprism
