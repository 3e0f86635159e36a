// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidprism/autodiff.hpp"

namespace vidprism {

/// Which directions of the pairwise exchange run. Pathway 0 has the lowest
/// rate, so a lower index is always the faster (longer) pathway.
enum class InteractionMode { none, slow_to_fast, fast_to_slow, bidirectional };

std::string to_string(InteractionMode mode);
InteractionMode parse_interaction_mode(const std::string& name);

struct DbiConfig {
  double threshold = 0.5;
  std::size_t kernel = 3;
  InteractionMode mode = InteractionMode::bidirectional;

  void validate() const;
};

struct PathwaySet {
  std::vector<Var> pathways;  // F_i [T/r_i x D]
  std::vector<std::size_t> rates;

  std::size_t size() const noexcept { return pathways.size(); }
  /// Throws PathwayError on incompatible rates or shapes.
  void validate() const;
};

/// One 2D -> D -> 1 perceptron per unordered pair (i < j).
struct GateNet {
  struct Pair {
    std::size_t i = 0, j = 0;
    Var fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  };
  std::vector<Pair> pairs;

  static GateNet create(ParameterStore& store, const std::string& prefix, std::size_t pathways, std::size_t dim);
};

/// Directed exchange maps. `weight` is [D x D] for slow->fast and
/// [k x D x D] for fast->slow.
struct FusionParams {
  struct Map {
    std::size_t src = 0, dst = 0;
    Var weight, bias;
  };
  std::vector<Map> maps;

  static FusionParams create(ParameterStore& store, const std::string& prefix, std::size_t pathways,
                             std::size_t dim, std::size_t kernel);
  const Map& get(std::size_t src, std::size_t dst) const;
};

struct GateMatrix {
  std::size_t n = 0;
  double threshold = 0.5;
  std::vector<double> scores;  // n x n, symmetric, zero diagonal
  std::vector<char> active;    // n x n
  std::vector<Var> pair_score; // n x n, undefined on the diagonal; [1 x 1]

  double score(std::size_t i, std::size_t j) const { return scores[i * n + j]; }
  bool is_active(std::size_t i, std::size_t j) const { return active[i * n + j] != 0; }
  const Var& score_var(std::size_t i, std::size_t j) const { return pair_score[i * n + j]; }
};

nlohmann::json to_json(const GateMatrix& gates);

/// s_ij = sigmoid(MLP_ij([mean_t F_i; mean_t F_j])) for every i < j.
GateMatrix gate_scores(const PathwaySet& pset, const GateNet& gates, double threshold);

/// F_fast + s * Conv1x1(Interp(F_slow -> T_fast)). Skipped when s < threshold.
Var slow_to_fast(const Var& slow, const Var& fast, const Var& s, const FusionParams::Map& map,
                 double threshold = 0.0);

/// F_slow + s * TConv(F_fast), stride T_fast / T_slow. Skipped when
/// s < threshold. Throws PathwayError if the lengths do not divide.
Var fast_to_slow(const Var& fast, const Var& slow, const Var& s, const FusionParams::Map& map,
                 double threshold = 0.0);

struct InteractResult {
  PathwaySet pathways;
  GateMatrix gates;
};

/// Every active directed update reads the input pathways, never a partially
/// updated one; updates land on each destination in ascending source order.
InteractResult interact(const PathwaySet& pset, const GateNet& gates, const FusionParams& fusion,
                        const DbiConfig& cfg);

}  // namespace vidprism
