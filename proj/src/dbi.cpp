// SPDX-License-Identifier: Apache-2.0
#include "vidprism/dbi.hpp"

#include <algorithm>
#include <cmath>

#include "vidprism/errors.hpp"
#include "vidprism/ops.hpp"

namespace vidprism {

namespace {

std::string pair_name(std::size_t a, std::size_t b) { return std::to_string(a) + "_" + std::to_string(b); }

Var s2f_update(const Var& slow, std::size_t fast_len, const Var& s, const FusionParams::Map& map) {
  return mul(s, linear(interp_time(slow, fast_len), map.weight, map.bias));
}

Var f2s_update(const Var& fast, std::size_t slow_len, const Var& s, const FusionParams::Map& map) {
  const std::size_t fast_len = fast.dim(0);
  if (slow_len == 0 || fast_len % slow_len != 0) {
    throw PathwayError("fast pathway length " + std::to_string(fast_len) + " is not a multiple of slow length " +
                       std::to_string(slow_len));
  }
  return mul(s, conv_time(fast, map.weight, map.bias, fast_len / slow_len, slow_len));
}

}  // namespace

std::string to_string(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::none: return "none";
    case InteractionMode::slow_to_fast: return "slow2fast";
    case InteractionMode::fast_to_slow: return "fast2slow";
    case InteractionMode::bidirectional: return "bidirectional";
  }
  return "?";
}

InteractionMode parse_interaction_mode(const std::string& name) {
  if (name == "none") return InteractionMode::none;
  if (name == "slow2fast") return InteractionMode::slow_to_fast;
  if (name == "fast2slow") return InteractionMode::fast_to_slow;
  if (name == "bidirectional") return InteractionMode::bidirectional;
  throw ConfigError("unknown interaction mode '" + name + "'");
}

void DbiConfig::validate() const {
  if (!std::isfinite(threshold)) throw ConfigError("dbi threshold must be finite");
  if (kernel == 0) throw ConfigError("dbi kernel width must be >= 1");
}

void PathwaySet::validate() const {
  if (pathways.empty()) throw PathwayError("pathway set is empty");
  if (rates.size() != pathways.size()) throw PathwayError("pathway and rate counts differ");
  std::size_t frames = 0;
  const std::size_t dim = pathways[0].value().rank() == 2 ? pathways[0].dim(1) : 0;
  for (std::size_t i = 0; i < pathways.size(); ++i) {
    const Tensor& f = pathways[i].value();
    if (f.rank() != 2 || f.dim(1) != dim || f.dim(0) == 0) {
      throw PathwayError("pathway " + std::to_string(i) + " has shape " + shape_str(f.shape()));
    }
    if (rates[i] == 0) throw PathwayError("rate 0 is invalid");
    if (i > 0 && (rates[i] <= rates[i - 1] || rates[i] % rates[i - 1] != 0)) {
      throw PathwayError("rates must increase and divide: " + std::to_string(rates[i - 1]) + " then " +
                         std::to_string(rates[i]));
    }
    const std::size_t t = f.dim(0) * rates[i];
    if (i == 0) frames = t;
    if (t != frames) {
      throw PathwayError("pathway " + std::to_string(i) + " length " + std::to_string(f.dim(0)) +
                         " does not match T=" + std::to_string(frames) + " at rate " + std::to_string(rates[i]));
    }
  }
}

GateNet GateNet::create(ParameterStore& store, const std::string& prefix, std::size_t pathways, std::size_t dim) {
  GateNet net;
  for (std::size_t i = 0; i < pathways; ++i) {
    for (std::size_t j = i + 1; j < pathways; ++j) {
      const std::string base = prefix + ".gate." + pair_name(i, j);
      Pair p;
      p.i = i;
      p.j = j;
      p.fc1_weight = store.uniform(base + ".fc1.weight", {2 * dim, dim}, 2 * dim, dim);
      p.fc1_bias = store.zeros(base + ".fc1.bias", {dim});
      p.fc2_weight = store.uniform(base + ".fc2.weight", {dim, 1}, dim, 1);
      p.fc2_bias = store.zeros(base + ".fc2.bias", {1});
      net.pairs.push_back(std::move(p));
    }
  }
  return net;
}

FusionParams FusionParams::create(ParameterStore& store, const std::string& prefix, std::size_t pathways,
                                  std::size_t dim, std::size_t kernel) {
  FusionParams fp;
  for (std::size_t a = 0; a < pathways; ++a) {
    for (std::size_t b = 0; b < pathways; ++b) {
      if (a == b) continue;
      Map m;
      m.src = a;
      m.dst = b;
      if (a > b) {
        const std::string base = prefix + ".s2f." + pair_name(a, b);
        m.weight = store.uniform(base + ".weight", {dim, dim}, dim, dim);
        m.bias = store.zeros(base + ".bias", {dim});
      } else {
        const std::string base = prefix + ".f2s." + pair_name(a, b);
        m.weight = store.uniform(base + ".weight", {kernel, dim, dim}, kernel * dim, dim);
        m.bias = store.zeros(base + ".bias", {dim});
      }
      fp.maps.push_back(std::move(m));
    }
  }
  return fp;
}

const FusionParams::Map& FusionParams::get(std::size_t src, std::size_t dst) const {
  for (const auto& m : maps)
    if (m.src == src && m.dst == dst) return m;
  throw PathwayError("no fusion map for " + pair_name(src, dst));
}

nlohmann::json to_json(const GateMatrix& gates) {
  nlohmann::json scores = nlohmann::json::array();
  nlohmann::json active = nlohmann::json::array();
  for (std::size_t i = 0; i < gates.n; ++i) {
    nlohmann::json srow = nlohmann::json::array();
    nlohmann::json arow = nlohmann::json::array();
    for (std::size_t j = 0; j < gates.n; ++j) {
      srow.push_back(gates.score(i, j));
      arow.push_back(gates.is_active(i, j));
    }
    scores.push_back(std::move(srow));
    active.push_back(std::move(arow));
  }
  return {{"n", gates.n}, {"threshold", gates.threshold}, {"scores", scores}, {"active", active}};
}

GateMatrix gate_scores(const PathwaySet& pset, const GateNet& gates, double threshold) {
  pset.validate();
  const std::size_t n = pset.size();
  GateMatrix gm;
  gm.n = n;
  gm.threshold = threshold;
  gm.scores.assign(n * n, 0.0);
  gm.active.assign(n * n, 0);
  gm.pair_score.assign(n * n, Var());
  std::vector<Var> summary;
  summary.reserve(n);
  for (const Var& f : pset.pathways) summary.push_back(mean(f, 0, true));  // [1 x D]
  for (const auto& p : gates.pairs) {
    if (p.j >= n) throw PathwayError("gate " + pair_name(p.i, p.j) + " exceeds pathway count");
    const Var parts[] = {summary[p.i], summary[p.j]};
    Var hidden = gelu(linear(concat(parts, 1), p.fc1_weight, p.fc1_bias));
    Var s = sigmoid(linear(hidden, p.fc2_weight, p.fc2_bias));  // [1 x 1]
    const double v = s.item();
    for (auto [a, b] : {std::pair{p.i, p.j}, std::pair{p.j, p.i}}) {
      gm.scores[a * n + b] = v;
      gm.active[a * n + b] = v >= threshold ? 1 : 0;
      gm.pair_score[a * n + b] = s;
    }
  }
  return gm;
}

Var slow_to_fast(const Var& slow, const Var& fast, const Var& s, const FusionParams::Map& map, double threshold) {
  if (s.item() < threshold) return fast;
  return add(fast, s2f_update(slow, fast.dim(0), s, map));
}

Var fast_to_slow(const Var& fast, const Var& slow, const Var& s, const FusionParams::Map& map, double threshold) {
  if (s.item() < threshold) return slow;
  return add(slow, f2s_update(fast, slow.dim(0), s, map));
}

InteractResult interact(const PathwaySet& pset, const GateNet& gates, const FusionParams& fusion,
                        const DbiConfig& cfg) {
  cfg.validate();
  InteractResult out;
  out.gates = gate_scores(pset, gates, cfg.threshold);
  const std::size_t n = pset.size();
  if (cfg.mode == InteractionMode::none) std::fill(out.gates.active.begin(), out.gates.active.end(), 0);
  const bool s2f = cfg.mode == InteractionMode::slow_to_fast || cfg.mode == InteractionMode::bidirectional;
  const bool f2s = cfg.mode == InteractionMode::fast_to_slow || cfg.mode == InteractionMode::bidirectional;

  out.pathways.rates = pset.rates;
  out.pathways.pathways.reserve(n);
  for (std::size_t dst = 0; dst < n; ++dst) {
    const Var& target = pset.pathways[dst];
    Var acc = target;
    for (std::size_t src = 0; src < n; ++src) {
      if (src == dst || !out.gates.is_active(src, dst)) continue;
      const Var& s = out.gates.score_var(src, dst);
      const auto& map = fusion.get(src, dst);
      if (src > dst && s2f) acc = add(acc, s2f_update(pset.pathways[src], target.dim(0), s, map));
      if (src < dst && f2s) acc = add(acc, f2s_update(pset.pathways[src], target.dim(0), s, map));
    }
    out.pathways.pathways.push_back(acc);
  }
  return out;
}

}  // namespace vidprism
