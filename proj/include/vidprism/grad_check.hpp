// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "vidprism/autodiff.hpp"

namespace vidprism {

struct GradCheckOptions {
  double step = 1e-5;
  /// Elements probed per parameter; 0 probes every element.
  std::size_t samples_per_parameter = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

/// Compares the tape gradient of `loss_fn` against central differences.
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-8). `loss_fn`
/// must be deterministic. Throws GradCheckError naming the parameter when
/// either gradient is NaN.
GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::span<const Parameter> params,
                           const GradCheckOptions& options = {});

}  // namespace vidprism
