// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidprism/autodiff.hpp"

namespace vidprism {

struct LossWeights {
  double rank = 0.1;
  double div = 0.01;
  double gate = 0.01;
  double temperature = 1.0;  // T_s of the ranking loss

  void validate() const;
};

struct LossBreakdown {
  double cls = 0, rank = 0, div = 0, gate = 0, total = 0;
};

nlohmann::json to_json(const LossBreakdown& b);

/// Mean over the batch of -log softmax(logits)[label]. logits [B x C].
Var loss_cls(const Var& logits, std::span<const std::uint32_t> labels);

/// Mean over items of KL(softmax(tgt / T_s) || softmax(pred / T_s)). Each
/// s_pred is [T]; s_tgt is a constant.
Var loss_rank(std::span<const Var> s_pred, std::span<const std::vector<double>> s_tgt, double temperature);

/// Mean over samples of the mean pairwise cosine similarity between the
/// experts' time-averaged outputs. Zero for a single expert.
Var loss_div(std::span<const std::vector<Var>> expert_outputs);

/// N * sum_i C_i^2 with C_i the column mean of W [B x N]. Rows must sum to 1.
Var loss_gate(const Var& weights);

struct LossTerms {
  Var cls, rank, div, gate;
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};

TotalLoss loss_total(const LossTerms& terms, const LossWeights& w);

}  // namespace vidprism
