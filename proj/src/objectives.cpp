// SPDX-License-Identifier: Apache-2.0
#include "vidprism/objectives.hpp"

#include <cmath>

#include "vidprism/errors.hpp"
#include "vidprism/ops.hpp"

namespace vidprism {

void LossWeights::validate() const {
  for (double v : {rank, div, gate}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("ranking temperature must be > 0");
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"cls", b.cls}, {"rank", b.rank}, {"div", b.div}, {"gate", b.gate}, {"total", b.total}};
}

Var loss_cls(const Var& logits, std::span<const std::uint32_t> labels) {
  if (logits.shape().size() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError("loss_cls: logits " + shape_str(logits.shape()) + " for " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  Tensor onehot({b, c}, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= c) {
      throw ContractError("loss_cls: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    onehot.at(i, labels[i]) = 1.0;
  }
  return scale(sum_all(mul(log_softmax(logits, 1), constant(std::move(onehot)))), -1.0 / static_cast<double>(b));
}

Var loss_rank(std::span<const Var> s_pred, std::span<const std::vector<double>> s_tgt, double temperature) {
  if (s_pred.size() != s_tgt.size()) throw ShapeError("loss_rank: prediction and target counts differ");
  if (s_pred.empty()) return constant(Tensor::scalar(0.0));
  Var acc;
  for (std::size_t k = 0; k < s_pred.size(); ++k) {
    const std::size_t t = s_tgt[k].size();
    if (s_pred[k].size() != t) throw ShapeError("loss_rank: score lengths differ");
    // Both sides are scaled the same way so identical scores give exactly 0.
    Var log_p = log_softmax(scale(constant(Tensor({t}, s_tgt[k])), 1.0 / temperature), 0);
    Tensor p = exp(log_p).value();
    Var log_q = log_softmax(scale(reshape(s_pred[k], {t}), 1.0 / temperature), 0);
    Var kl = sum_all(mul(constant(std::move(p)), sub(log_p, log_q)));
    acc = k == 0 ? kl : add(acc, kl);
  }
  return scale(acc, 1.0 / static_cast<double>(s_pred.size()));
}

Var loss_div(std::span<const std::vector<Var>> expert_outputs) {
  if (expert_outputs.empty()) throw ContractError("loss_div: empty batch");
  Var acc;
  for (std::size_t b = 0; b < expert_outputs.size(); ++b) {
    const auto& experts = expert_outputs[b];
    const std::size_t n = experts.size();
    if (n < 2) return constant(Tensor::scalar(0.0));
    std::vector<Var> means;
    for (const Var& f : experts) means.push_back(mean(f, 0));
    Var pairs;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        Var c = cosine_similarity(means[i], means[j], 0);
        pairs = pairs.defined() ? add(pairs, c) : c;
      }
    Var sample = scale(pairs, 2.0 / static_cast<double>(n * (n - 1)));
    acc = b == 0 ? sample : add(acc, sample);
  }
  return scale(acc, 1.0 / static_cast<double>(expert_outputs.size()));
}

Var loss_gate(const Var& weights) {
  if (weights.shape().size() != 2 || weights.dim(0) == 0) throw ShapeError("loss_gate: W must be [B x N]");
  const std::size_t b = weights.dim(0), n = weights.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    double row = 0.0;
    for (std::size_t e = 0; e < n; ++e) row += weights.value().at(i, e);
    if (std::abs(row - 1.0) > 1e-6) {
      throw ContractError("loss_gate: row " + std::to_string(i) + " of W sums to " + std::to_string(row));
    }
  }
  Var c = mean(weights, 0);
  return scale(sum_all(mul(c, c)), static_cast<double>(n));
}

TotalLoss loss_total(const LossTerms& terms, const LossWeights& w) {
  w.validate();
  TotalLoss out;
  out.total = add(add(add(terms.cls, scale(terms.rank, w.rank)), scale(terms.div, w.div)), scale(terms.gate, w.gate));
  out.breakdown.cls = terms.cls.item();
  out.breakdown.rank = terms.rank.item();
  out.breakdown.div = terms.div.item();
  out.breakdown.gate = terms.gate.item();
  out.breakdown.total = out.total.item();
  return out;
}

}  // namespace vidprism
