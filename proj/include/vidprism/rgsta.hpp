// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidprism/autodiff.hpp"

namespace vidprism {

/// How a rate group of r frames collapses to one pathway token.
enum class AggregationMode {
  rgsta,          // keep the top-scored frame, soft-merge the rest into it
  hard_sampling,  // keep the top-scored frame only (delta forced to 0)
  mean_pool,      // channelwise mean, no scoring
  max_pool,       // channelwise max, no scoring
};

std::string to_string(AggregationMode mode);
AggregationMode parse_aggregation_mode(const std::string& name);

struct RgstaConfig {
  std::size_t rate = 2;
  /// Weight of the learned score against the feature-norm score.
  double alpha = 0.5;
  /// Similarity temperature; must be > 0.
  double tau = 1.0;
  /// Scale applied to the merged rest-set contribution.
  double delta = 0.5;
  /// Width of the metric projection; 0 means D / 2.
  std::size_t metric_dim = 0;
  /// Min-max normalise s_pred and s_norm over the clip before mixing.
  bool normalize_scores = true;

  std::size_t resolved_metric_dim(std::size_t feature_dim) const;
  void validate() const;
};

struct RgstaParams {
  Var metric_weight;  // [D x M]
  Var metric_bias;    // [M]
  // No biases on the score path: a shift shared by every frame cancels in
  // the min-max, the argmax and the ranking softmax alike.
  Var norm_gain;      // [M]
  Var score_weight;   // [M x 1]

  static RgstaParams create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                            std::size_t metric_dim);
};

struct FrameScores {
  Var pred;    // [T], differentiable learned score
  Var metric;  // [T x M], metric projection of every frame
  std::vector<double> pred_values;
  std::vector<double> norm;  // raw L2 norm per frame
  std::vector<double> mix;
};

/// Per-clip record of what aggregation decided.
struct MergeTrace {
  std::size_t rate = 1;
  AggregationMode mode = AggregationMode::rgsta;
  std::vector<std::size_t> kept;                // absolute frame index per group
  std::vector<double> s_pred, s_norm, s_mix;    // per frame
  std::vector<std::vector<double>> attention;   // per group, one weight per rest frame
  std::vector<double> s_tgt;                    // per frame, detached
};

nlohmann::json to_json(const MergeTrace& trace);

struct MergeResult {
  Var merged;  // [groups x D]
  MergeTrace trace;
};

struct AggregateResult {
  Var pathway;  // [T / r x D]
  Var s_pred;   // [T]; undefined for mean/max pooling
  MergeTrace trace;
};

/// s_pred = ScoreHead(LN(MetricProj(frames))), s_norm = ||frame||_2,
/// s_mix = alpha * s_pred + (1 - alpha) * s_norm (after optional min-max).
FrameScores score_frames(const Var& frames, const RgstaParams& params, const RgstaConfig& cfg);

/// Consecutive groups of `rate` frames. Throws RateError if T % rate != 0.
std::vector<Tensor> split_groups(const Tensor& frames, std::size_t rate);

/// Index of the maximum; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

/// Merges one group [r x D] given its mixed scores. Selection is a hard,
/// non-differentiable routing decision.
MergeResult soft_merge_group(const Var& group, std::span<const double> s_mix, const RgstaParams& params,
                             const RgstaConfig& cfg);

/// Full per-rate aggregation of a clip [T x D] into a pathway [T/r x D].
AggregateResult aggregate(const Var& frames, const RgstaParams& params, const RgstaConfig& cfg,
                          AggregationMode mode = AggregationMode::rgsta);

/// Ranking target: ||c_i|| + (1/r) * sum_j cos(c_i, c_j) over frame i's rate
/// group, self included.
std::vector<double> target_scores(const Tensor& frames, std::size_t rate);

}  // namespace vidprism
