// SPDX-License-Identifier: Apache-2.0
#include "vidprism/hmoe.hpp"

#include <cmath>

#include "vidprism/errors.hpp"
#include "vidprism/ops.hpp"

namespace vidprism {

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& prefix, std::size_t dim) {
  AttentionParams p;
  auto proj = [&](const char* name, Var& w, Var* b) {
    w = store.uniform(prefix + "." + name + ".weight", {dim, dim}, dim, dim);
    if (b) *b = store.zeros(prefix + "." + name + ".bias", {dim});
  };
  proj("q_proj", p.wq, &p.bq);
  proj("k_proj", p.wk, nullptr);
  proj("v_proj", p.wv, &p.bv);
  proj("out_proj", p.wo, &p.bo);
  return p;
}

AttentionOutput multi_head_attention(const Var& query, const Var& context, const AttentionParams& p,
                                     std::size_t heads) {
  const std::size_t d = p.wq.dim(0);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention: " + std::to_string(heads) + " heads do not divide D=" + std::to_string(d));
  }
  if (context.shape().size() != 2 || context.dim(0) == 0) throw ContractError("attention: empty context");
  const std::size_t dh = d / heads;
  Var q = linear(query, p.wq, p.bq);
  Var k = matmul(context, p.wk);
  Var v = linear(context, p.wv, p.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionOutput out;
  std::vector<Var> mixed;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    Var scores = scale(matmul(slice(q, 1, b, e), transpose(slice(k, 1, b, e))), inv_sqrt);
    Var probs = softmax(scores, 1);
    mixed.push_back(matmul(probs, slice(v, 1, b, e)));
    out.probs.push_back(probs);
  }
  out.out = linear(heads == 1 ? mixed[0] : concat(mixed, 1), p.wo, p.bo);
  return out;
}

ExpertLayer ExpertLayer::create(ParameterStore& store, const std::string& prefix, std::size_t dim) {
  ExpertLayer e;
  e.attn = AttentionParams::create(store, prefix + ".attn", dim);
  e.ln1_gain = store.ones(prefix + ".ln1.gain", {dim});
  e.ln1_bias = store.zeros(prefix + ".ln1.bias", {dim});
  e.ffn_w1 = store.uniform(prefix + ".ffn.fc1.weight", {dim, 4 * dim}, dim, 4 * dim);
  e.ffn_b1 = store.zeros(prefix + ".ffn.fc1.bias", {4 * dim});
  e.ffn_w2 = store.uniform(prefix + ".ffn.fc2.weight", {4 * dim, dim}, 4 * dim, dim);
  e.ffn_b2 = store.zeros(prefix + ".ffn.fc2.bias", {dim});
  e.ln2_gain = store.ones(prefix + ".ln2.gain", {dim});
  e.ln2_bias = store.zeros(prefix + ".ln2.bias", {dim});
  return e;
}

ExpertOutput expert_forward(const Var& f, const ExpertLayer& expert, std::size_t heads) {
  ExpertOutput out;
  AttentionOutput sa = multi_head_attention(f, f, expert.attn, heads);
  out.attention = std::move(sa.probs);
  Var h = layer_norm(add(f, sa.out), expert.ln1_gain, expert.ln1_bias);
  Var ffn = linear(gelu(linear(h, expert.ffn_w1, expert.ffn_b1)), expert.ffn_w2, expert.ffn_b2);
  out.out = layer_norm(add(h, ffn), expert.ln2_gain, expert.ln2_bias);
  return out;
}

std::string to_string(CombinationMode mode) {
  switch (mode) {
    case CombinationMode::global_attention: return "global_attention";
    case CombinationMode::mean_pool: return "mean_pool";
    case CombinationMode::linear: return "linear";
    case CombinationMode::mlp: return "mlp";
    case CombinationMode::local_attention: return "local_attention";
  }
  return "?";
}

CombinationMode parse_combination_mode(const std::string& name) {
  for (auto m : {CombinationMode::global_attention, CombinationMode::mean_pool, CombinationMode::linear,
                 CombinationMode::mlp, CombinationMode::local_attention}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown combination mode '" + name +
                    "' (global_attention|mean_pool|linear|mlp|local_attention)");
}

Readout Readout::create(ParameterStore& store, const std::string& prefix, CombinationMode mode, std::size_t dim,
                        std::size_t experts, std::size_t classes, std::size_t heads) {
  Readout ro;
  ro.mode = mode;
  ro.heads = heads;
  switch (mode) {
    case CombinationMode::global_attention:
      ro.query = store.uniform(prefix + ".query", {1, dim}, dim, dim);
      ro.attn = AttentionParams::create(store, prefix + ".attn", dim);
      break;
    case CombinationMode::local_attention:
      ro.query = store.uniform(prefix + ".query", {experts, dim}, dim, dim);
      ro.attn = AttentionParams::create(store, prefix + ".attn", dim);
      break;
    case CombinationMode::linear:
      ro.w1 = store.uniform(prefix + ".fc1.weight", {experts * dim, dim}, experts * dim, dim);
      ro.b1 = store.zeros(prefix + ".fc1.bias", {dim});
      break;
    case CombinationMode::mlp:
      ro.w1 = store.uniform(prefix + ".fc1.weight", {experts * dim, dim}, experts * dim, dim);
      ro.b1 = store.zeros(prefix + ".fc1.bias", {dim});
      ro.w2 = store.uniform(prefix + ".fc2.weight", {dim, dim}, dim, dim);
      ro.b2 = store.zeros(prefix + ".fc2.bias", {dim});
      break;
    case CombinationMode::mean_pool: break;
  }
  ro.cls_weight = store.uniform(prefix + ".classifier.weight", {dim, classes}, dim, classes);
  ro.cls_bias = store.zeros(prefix + ".classifier.bias", {classes});
  return ro;
}

namespace {

Var time_means(std::span<const Var> outputs) {
  std::vector<Var> means;
  for (const Var& f : outputs) means.push_back(mean(f, 0, true));
  return means.size() == 1 ? means[0] : concat(means, 1);  // [1 x N*D]
}

Var uniform_weights(std::size_t n) { return constant(Tensor({1, n}, 1.0 / static_cast<double>(n))); }

}  // namespace

ReadoutResult readout(std::span<const Var> expert_outputs, const Readout& ro) {
  if (expert_outputs.empty()) throw ContractError("readout: no expert outputs");
  const std::size_t n = expert_outputs.size();
  std::size_t tokens = 0;
  for (const Var& f : expert_outputs) tokens += f.dim(0);

  ReadoutResult out;
  switch (ro.mode) {
    case CombinationMode::global_attention: {
      Var all = n == 1 ? expert_outputs[0] : concat(expert_outputs, 0);
      AttentionOutput a = multi_head_attention(ro.query, all, ro.attn, ro.heads);
      out.fused = a.out;
      // Head-averaged probability mass summed over each expert's token span.
      Tensor span_indicator({tokens, n}, 0.0);
      std::size_t row = 0;
      for (std::size_t e = 0; e < n; ++e)
        for (std::size_t t = 0; t < expert_outputs[e].dim(0); ++t) span_indicator.at(row++, e) = 1.0;
      Var mass = a.probs[0];
      for (std::size_t h = 1; h < a.probs.size(); ++h) mass = add(mass, a.probs[h]);
      mass = scale(mass, 1.0 / static_cast<double>(a.probs.size()));
      // One expert owns all the mass; skip the rounding of the sum.
      out.weights = n == 1 ? constant(Tensor({1, 1}, 1.0)) : matmul(mass, constant(std::move(span_indicator)));
      out.probs = std::move(a.probs);
      break;
    }
    case CombinationMode::mean_pool: {
      Var all = n == 1 ? expert_outputs[0] : concat(expert_outputs, 0);
      out.fused = mean(all, 0, true);
      Tensor w({1, n});
      for (std::size_t e = 0; e < n; ++e) w[e] = static_cast<double>(expert_outputs[e].dim(0)) / tokens;
      out.weights = constant(std::move(w));
      break;
    }
    case CombinationMode::linear:
      out.fused = linear(time_means(expert_outputs), ro.w1, ro.b1);
      out.weights = uniform_weights(n);
      break;
    case CombinationMode::mlp:
      out.fused = linear(gelu(linear(time_means(expert_outputs), ro.w1, ro.b1)), ro.w2, ro.b2);
      out.weights = uniform_weights(n);
      break;
    case CombinationMode::local_attention: {
      if (ro.query.dim(0) != n) throw ShapeError("readout: local attention built for a different expert count");
      Var acc;
      for (std::size_t e = 0; e < n; ++e) {
        Var v = multi_head_attention(slice(ro.query, 0, e, e + 1), expert_outputs[e], ro.attn, ro.heads).out;
        acc = e == 0 ? v : add(acc, v);
      }
      out.fused = scale(acc, 1.0 / static_cast<double>(n));
      out.weights = uniform_weights(n);
      break;
    }
  }
  out.logits = linear(out.fused, ro.cls_weight, ro.cls_bias);
  return out;
}

void ModelConfig::validate() const {
  if (dim == 0) throw ConfigError("model: dim must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model: heads=" + std::to_string(heads) + " must divide dim=" + std::to_string(dim));
  }
  if (num_classes == 0) throw ConfigError("model: num_classes must be positive");
  if (rates.empty()) throw ConfigError("model: at least one rate is required");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] == 0) throw ConfigError("model: rates must be positive");
    if (i > 0 && (rates[i] <= rates[i - 1] || rates[i] % rates[i - 1] != 0)) {
      throw ConfigError("model: rates must increase and each must divide the next");
    }
  }
  rgsta.validate();
  dbi.validate();
}

void ModelConfig::check_frames(std::size_t frames) const {
  for (std::size_t r : rates) {
    if (frames % r != 0) {
      throw RateError("sequence length T=" + std::to_string(frames) + " is not divisible by rate r=" +
                      std::to_string(r));
    }
  }
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), store_(seed) {
  cfg_.validate();
  const std::size_t d = cfg_.dim;
  const std::size_t n = cfg_.rates.size();
  const std::size_t m = cfg_.rgsta.resolved_metric_dim(d);
  for (std::size_t r : cfg_.rates) rgsta_.push_back(RgstaParams::create(store_, "rgsta.r" + std::to_string(r), d, m));
  gates_ = GateNet::create(store_, "dbi", n, d);
  fusion_ = FusionParams::create(store_, "dbi", n, d, cfg_.dbi.kernel);
  for (std::size_t i = 0; i < n; ++i) experts_.push_back(ExpertLayer::create(store_, "expert." + std::to_string(i), d));
  readout_ = Readout::create(store_, "readout", cfg_.combination, d, n, cfg_.num_classes, cfg_.heads);
}

ForwardResult Model::forward(const Tensor& frames) const {
  if (frames.rank() != 2 || frames.dim(1) != cfg_.dim) {
    throw ShapeError("model: clip " + shape_str(frames.shape()) + " does not have D=" + std::to_string(cfg_.dim));
  }
  cfg_.check_frames(frames.dim(0));
  ForwardResult out;
  Var x = constant(frames);
  PathwaySet pset;
  pset.rates = cfg_.rates;
  for (std::size_t i = 0; i < cfg_.rates.size(); ++i) {
    RgstaConfig rc = cfg_.rgsta;
    rc.rate = cfg_.rates[i];
    out.aggregates.push_back(aggregate(x, rgsta_[i], rc, cfg_.aggregation));
    pset.pathways.push_back(out.aggregates.back().pathway);
  }
  InteractResult fused = interact(pset, gates_, fusion_, cfg_.dbi);
  out.gates = std::move(fused.gates);
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    out.expert_outputs.push_back(expert_forward(fused.pathways.pathways[i], experts_[i], cfg_.heads).out);
  }
  ReadoutResult ro = readout(out.expert_outputs, readout_);
  out.logits = ro.logits;
  out.weights = ro.weights;
  return out;
}

}  // namespace vidprism
