// SPDX-License-Identifier: Apache-2.0
#include "vidprism/rgsta.hpp"

#include <algorithm>
#include <cmath>

#include "vidprism/errors.hpp"
#include "vidprism/ops.hpp"

namespace vidprism {

namespace {

void check_rate(std::size_t frames, std::size_t rate) {
  if (rate == 0 || frames % rate != 0) {
    throw RateError("sequence length T=" + std::to_string(frames) + " is not divisible by rate r=" +
                    std::to_string(rate));
  }
}

std::vector<double> min_max(const std::vector<double>& v) {
  if (v.empty()) return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double span = *hi - *lo;
  std::vector<double> out(v.size(), 0.0);
  if (span > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / span;
  }
  return out;
}

// Groups `frames` [G*r x D] into G tokens using the precomputed metric
// projection; `kept_local[g]` is the in-group index of the kept frame.
Var merge_groups(const Var& frames, const Var& metric, std::size_t rate, const std::vector<std::size_t>& kept_local,
                 const RgstaConfig& cfg, MergeTrace& trace) {
  const std::size_t groups = kept_local.size();
  const std::size_t d = frames.dim(1);
  std::vector<std::size_t> kept_rows(groups);
  std::vector<std::size_t> rest_rows;
  std::vector<std::size_t> rest_group;
  for (std::size_t g = 0; g < groups; ++g) {
    kept_rows[g] = g * rate + kept_local[g];
    for (std::size_t i = 0; i < rate; ++i) {
      if (i == kept_local[g]) continue;
      rest_rows.push_back(g * rate + i);
      rest_group.push_back(g);
    }
  }
  trace.kept = kept_rows;
  Var kept = gather_rows(frames, kept_rows);
  trace.attention.assign(groups, {});
  if (rest_rows.empty()) return kept;

  // S = Z_rest Z_kept^T per group, with a single kept column; A = softmax
  // over that column.
  Var z = l2_normalize(metric, 1);
  Var z_kept = gather_rows(z, kept_rows);
  Var z_rest = gather_rows(z, rest_rows);
  Var sim = sum(mul(z_rest, gather_rows(z_kept, rest_group)), 1, true);  // [R x 1]
  Var attn = softmax(scale(sim, 1.0 / cfg.tau), 1);                      // [R x 1]
  const std::size_t rest_per_group = rate - 1;
  for (std::size_t k = 0; k < rest_rows.size(); ++k) trace.attention[rest_group[k]].push_back(attn.value()[k]);

  if (cfg.delta == 0.0) return kept;
  Var weighted = mul(attn, gather_rows(frames, rest_rows));              // [R x D]
  Var pooled = sum(reshape(weighted, {groups, rest_per_group, d}), 1);   // [G x D]
  return add(kept, scale(pooled, cfg.delta));
}

}  // namespace

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::rgsta: return "rgsta";
    case AggregationMode::hard_sampling: return "hard_sampling";
    case AggregationMode::mean_pool: return "mean_pool";
    case AggregationMode::max_pool: return "max_pool";
  }
  return "?";
}

AggregationMode parse_aggregation_mode(const std::string& name) {
  for (auto m : {AggregationMode::rgsta, AggregationMode::hard_sampling, AggregationMode::mean_pool,
                 AggregationMode::max_pool}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown aggregation mode '" + name + "' (rgsta|hard_sampling|mean_pool|max_pool)");
}

std::size_t RgstaConfig::resolved_metric_dim(std::size_t feature_dim) const {
  return metric_dim ? metric_dim : std::max<std::size_t>(1, feature_dim / 2);
}

void RgstaConfig::validate() const {
  if (rate == 0) throw ConfigError("rgsta: rate must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("rgsta: alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("rgsta: tau must be positive");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("rgsta: delta must be finite and >= 0");
}

RgstaParams RgstaParams::create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                std::size_t metric_dim) {
  RgstaParams p;
  p.metric_weight = store.uniform(prefix + ".metric_proj.weight", {dim, metric_dim}, dim, metric_dim);
  p.metric_bias = store.zeros(prefix + ".metric_proj.bias", {metric_dim});
  p.norm_gain = store.ones(prefix + ".score_norm.gain", {metric_dim});
  p.score_weight = store.uniform(prefix + ".score_head.weight", {metric_dim, 1}, metric_dim, 1);
  return p;
}

nlohmann::json to_json(const MergeTrace& trace) {
  return nlohmann::json{{"rate", trace.rate},   {"mode", to_string(trace.mode)}, {"kept_indices", trace.kept},
                        {"s_pred", trace.s_pred}, {"s_norm", trace.s_norm},    {"s_mix", trace.s_mix},
                        {"attention", trace.attention}, {"s_tgt", trace.s_tgt}};
}

FrameScores score_frames(const Var& frames, const RgstaParams& params, const RgstaConfig& cfg) {
  if (frames.shape().size() != 2 || frames.dim(1) != params.metric_weight.dim(0)) {
    throw ShapeError("score_frames: frames " + shape_str(frames.shape()) + " vs metric projection " +
                     shape_str(params.metric_weight.shape()));
  }
  const std::size_t t = frames.dim(0);
  FrameScores s;
  s.metric = linear(frames, params.metric_weight, params.metric_bias);
  const Var no_shift(Tensor({params.norm_gain.dim(0)}, 0.0));
  Var head = matmul(layer_norm(s.metric, params.norm_gain, no_shift), params.score_weight);
  s.pred = reshape(head, {t});
  s.pred_values = s.pred.value().values();

  const std::size_t d = frames.dim(1);
  s.norm.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += frames.value()[i * d + j] * frames.value()[i * d + j];
    s.norm[i] = std::sqrt(acc);
  }
  const auto pred_n = cfg.normalize_scores ? min_max(s.pred_values) : s.pred_values;
  const auto norm_n = cfg.normalize_scores ? min_max(s.norm) : s.norm;
  s.mix.resize(t);
  for (std::size_t i = 0; i < t; ++i) s.mix[i] = cfg.alpha * pred_n[i] + (1.0 - cfg.alpha) * norm_n[i];
  return s;
}

std::vector<Tensor> split_groups(const Tensor& frames, std::size_t rate) {
  check_rate(frames.dim(0), rate);
  std::vector<Tensor> groups;
  for (std::size_t g = 0; g < frames.dim(0) / rate; ++g) groups.push_back(frames.rows(g * rate, (g + 1) * rate));
  return groups;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

MergeResult soft_merge_group(const Var& group, std::span<const double> s_mix, const RgstaParams& params,
                             const RgstaConfig& cfg) {
  if (group.shape().size() != 2 || group.dim(0) == 0) throw ContractError("soft_merge_group: empty group");
  const std::size_t r = group.dim(0);
  if (s_mix.size() != r) throw ShapeError("soft_merge_group: " + std::to_string(s_mix.size()) + " scores for " +
                                          std::to_string(r) + " frames");
  MergeResult out;
  out.trace.rate = r;
  out.trace.s_mix.assign(s_mix.begin(), s_mix.end());
  Var metric = linear(group, params.metric_weight, params.metric_bias);
  out.merged = merge_groups(group, metric, r, {argmax_lowest(s_mix)}, cfg, out.trace);
  return out;
}

AggregateResult aggregate(const Var& frames, const RgstaParams& params, const RgstaConfig& cfg, AggregationMode mode) {
  if (frames.shape().size() != 2) throw ShapeError("aggregate: frames must be [T x D]");
  const std::size_t t = frames.dim(0);
  const std::size_t r = cfg.rate;
  check_rate(t, r);
  const std::size_t groups = t / r;
  const std::size_t d = frames.dim(1);

  AggregateResult out;
  out.trace.rate = r;
  out.trace.mode = mode;
  if (mode == AggregationMode::mean_pool || mode == AggregationMode::max_pool) {
    Var grouped = reshape(frames, {groups, r, d});
    out.pathway = mode == AggregationMode::mean_pool ? mean(grouped, 1) : max(grouped, 1);
    return out;
  }

  FrameScores scores = score_frames(frames, params, cfg);
  std::vector<std::size_t> kept_local(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    kept_local[g] = argmax_lowest(std::span<const double>(scores.mix).subspan(g * r, r));
  }
  RgstaConfig effective = cfg;
  if (mode == AggregationMode::hard_sampling) effective.delta = 0.0;
  out.pathway = merge_groups(frames, scores.metric, r, kept_local, effective, out.trace);
  out.s_pred = scores.pred;
  out.trace.s_pred = std::move(scores.pred_values);
  out.trace.s_norm = std::move(scores.norm);
  out.trace.s_mix = std::move(scores.mix);
  out.trace.s_tgt = target_scores(frames.value(), r);
  return out;
}

std::vector<double> target_scores(const Tensor& frames, std::size_t rate) {
  const std::size_t t = frames.dim(0);
  check_rate(t, rate);
  const std::size_t d = frames.dim(1);
  constexpr double eps = 1e-8;
  std::vector<double> norms(t);
  for (std::size_t i = 0; i < t; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += frames.at(i, j) * frames.at(i, j);
    norms[i] = std::sqrt(acc);
  }
  std::vector<double> out(t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t g0 = (i / rate) * rate;
    double sim = 0.0;
    for (std::size_t k = g0; k < g0 + rate; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += frames.at(i, j) * frames.at(k, j);
      sim += dot / (std::max(norms[i], eps) * std::max(norms[k], eps));
    }
    out[i] = norms[i] + sim / static_cast<double>(rate);
  }
  return out;
}

}  // namespace vidprism
