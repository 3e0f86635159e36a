// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidprism/autodiff.hpp"
#include "vidprism/dbi.hpp"
#include "vidprism/rgsta.hpp"

namespace vidprism {

/// Query/key/value/output maps of one multi-head attention block. The key
/// map has no bias: it would shift every score of a query equally.
struct AttentionParams {
  Var wq, bq, wk, wv, bv, wo, bo;  // [D x D] and [D]

  static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t dim);
};

struct AttentionOutput {
  Var out;                 // [Tq x D]
  std::vector<Var> probs;  // per head, [Tq x Tk]
};

/// Scaled dot-product attention with `heads` heads of width D / heads.
AttentionOutput multi_head_attention(const Var& query, const Var& context, const AttentionParams& p,
                                     std::size_t heads);

struct ExpertLayer {
  AttentionParams attn;
  Var ln1_gain, ln1_bias;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // D -> 4D -> D
  Var ln2_gain, ln2_bias;

  static ExpertLayer create(ParameterStore& store, const std::string& prefix, std::size_t dim);
};

struct ExpertOutput {
  Var out;  // [T_i x D]
  std::vector<Var> attention;
};

/// Post-norm transformer layer: F' = LN(F + MHSA(F)), out = LN(F' + FFN(F')).
ExpertOutput expert_forward(const Var& f, const ExpertLayer& expert, std::size_t heads);

/// How expert outputs become one clip vector.
enum class CombinationMode { global_attention, mean_pool, linear, mlp, local_attention };

std::string to_string(CombinationMode mode);
CombinationMode parse_combination_mode(const std::string& name);

struct Readout {
  CombinationMode mode = CombinationMode::global_attention;
  std::size_t heads = 1;
  Var query;             // [1 x D] global query, or [N x D] per-expert queries
  AttentionParams attn;  // attention variants
  Var w1, b1, w2, b2;    // linear / mlp variants
  Var cls_weight, cls_bias;

  static Readout create(ParameterStore& store, const std::string& prefix, CombinationMode mode, std::size_t dim,
                        std::size_t experts, std::size_t classes, std::size_t heads);
};

struct ReadoutResult {
  Var fused;    // [1 x D]
  Var weights;  // [1 x N], per-expert readout mass
  Var logits;   // [1 x C]
  std::vector<Var> probs;  // per head [1 x sum T_i]; global attention only
};

/// Throws ContractError on an empty expert list.
ReadoutResult readout(std::span<const Var> expert_outputs, const Readout& ro);

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t num_classes = 8;
  std::size_t heads = 4;
  std::vector<std::size_t> rates{2, 4, 8, 16};
  RgstaConfig rgsta;  // rate is overwritten per pathway
  AggregationMode aggregation = AggregationMode::rgsta;
  DbiConfig dbi;
  CombinationMode combination = CombinationMode::global_attention;

  void validate() const;
  /// Throws RateError unless every rate divides `frames`.
  void check_frames(std::size_t frames) const;
};

struct ForwardResult {
  Var logits;   // [1 x C]
  Var weights;  // [1 x N]
  std::vector<AggregateResult> aggregates;
  GateMatrix gates;
  std::vector<Var> expert_outputs;
};

/// Rate-wise aggregation, pathway interaction, one expert per pathway and
/// the combination readout. No positional encodings anywhere.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardResult forward(const Tensor& frames) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }
  std::size_t num_experts() const noexcept { return cfg_.rates.size(); }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  std::vector<RgstaParams> rgsta_;
  GateNet gates_;
  FusionParams fusion_;
  std::vector<ExpertLayer> experts_;
  Readout readout_;
};

}  // namespace vidprism
