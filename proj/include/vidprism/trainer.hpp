// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidprism/dataset.hpp"
#include "vidprism/hmoe.hpp"
#include "vidprism/objectives.hpp"

namespace vidprism {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adaptive moment estimation with bias correction. A parameter without a
/// gradient is treated as having a zero gradient.
class Adam {
 public:
  Adam(std::span<Parameter> params, AdamConfig cfg);
  void step();
  std::size_t steps() const noexcept { return t_; }

 private:
  std::span<Parameter> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 0;
  LossWeights loss;
  std::size_t eval_every = 1;
  double eval_fraction = 0.25;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct DataSplit {
  std::vector<std::size_t> train, eval;  // ascending clip indices
};

/// Per class, a seeded shuffle sends round(fraction * n_c) clips to eval
/// (at least one when the class has two or more clips).
DataSplit stratified_split(const Dataset& ds, double eval_fraction, std::uint64_t seed);

struct BatchOutput {
  TotalLoss loss;
  std::vector<std::size_t> predictions;
  Tensor weights;  // [B x N]
};

/// Forward pass over a batch and the weighted objective.
BatchOutput batch_loss(const Model& model, std::span<const FeatureSequence* const> clips, const LossWeights& w);

struct EvalResult {
  double accuracy = 0;
  std::vector<std::size_t> predictions;
  std::vector<std::vector<double>> weights;  // per clip, one entry per expert
};

/// Throws ContractError on an empty index set.
EvalResult evaluate(const Model& model, const Dataset& ds, std::span<const std::size_t> indices);

/// Mean readout mass per class and expert, for training clips and for test
/// clips split by correctness.
struct ExpertUsage {
  static constexpr const char* kCohorts[3] = {"train", "test_correct", "test_wrong"};
  struct Cohort {
    std::vector<std::vector<double>> mean;  // [classes][experts]; zero rows when empty
    std::vector<std::size_t> count;         // [classes]
  };
  std::size_t classes = 0, experts = 0;
  Cohort cohorts[3];

  /// Header "class,expert_0,..,expert_{N-1},cohort"; rows with no clips are
  /// omitted.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

ExpertUsage expert_usage(const Dataset& ds, std::size_t experts, std::span<const std::size_t> train_idx,
                         const EvalResult& train_eval, std::span<const std::size_t> eval_idx,
                         const EvalResult& eval_eval);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_accuracy = 0;            // over the epoch's batches
  std::optional<double> eval_accuracy;  // only on eval epochs
  LossBreakdown loss;                   // mean over the epoch's steps
};

struct RunReport {
  nlohmann::json config;
  std::size_t train_clips = 0, eval_clips = 0, steps = 0;
  double initial_eval_accuracy = 0;
  std::vector<EpochRecord> epochs;
  double final_train_accuracy = 0, final_eval_accuracy = 0;
  ExpertUsage usage;
  /// Excluded from to_json() so that reports of identical runs compare equal.
  double wall_clock_seconds = 0;

  nlohmann::json to_json() const;
};

struct TrainIo {
  std::ostream* step_log = nullptr;      // JSON lines {step, cls, rank, div, gate, total}
  std::filesystem::path checkpoint;      // rewritten after every epoch when set
};

/// Throws DivergenceError carrying the last checkpoint path on a non-finite
/// loss.
RunReport train(Model& model, const Dataset& ds, const TrainConfig& cfg, const TrainIo& io = {});

struct ProbeResult {
  double train_accuracy = 0, eval_accuracy = 0;
};

/// Multinomial logistic regression on time-averaged frames; the baseline
/// that sees no temporal order.
ProbeResult linear_probe(const Dataset& ds, const DataSplit& split, std::uint64_t seed, std::size_t steps = 500,
                         double weight_decay = 1e-2);

enum class AblationAxis { aggregation, interaction, combination, expert_grid };

std::string to_string(AblationAxis axis);
/// Throws ConfigError listing the valid axes.
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationVariant {
  std::string name;
  ModelConfig model;
};

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base);

struct AblationRow {
  std::string variant;
  double train_accuracy = 0, eval_accuracy = 0;
  LossBreakdown loss;  // mean over the final epoch
};

/// Every variant trains from the same seed on the same split.
std::vector<AblationRow> run_ablation(AblationAxis axis, const ModelConfig& base, const TrainConfig& cfg,
                                      const Dataset& ds);
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace vidprism
