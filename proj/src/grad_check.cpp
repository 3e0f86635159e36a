// SPDX-License-Identifier: Apache-2.0
#include "vidprism/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vidprism/errors.hpp"
#include "vidprism/random.hpp"

namespace vidprism {

GradCheckResult grad_check(const std::function<Var()>& loss_fn, std::span<const Parameter> params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
  backward(loss_fn());

  GradCheckResult result;
  Rng rng(options.seed);
  for (const auto& p : params) {
    Var var = p.var;
    const std::size_t n = var.size();
    const Tensor analytic = var.grad().empty() ? Tensor(var.shape(), 0.0) : var.grad();

    std::vector<std::size_t> probe(n);
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.samples_per_parameter > 0 && options.samples_per_parameter < n) {
      Rng local = rng.split(p.name);
      local.shuffle(probe);
      probe.resize(options.samples_per_parameter);
      std::sort(probe.begin(), probe.end());
    }

    for (std::size_t idx : probe) {
      double& slot = var.mutable_value()[idx];
      const double saved = slot;
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard guard;
        slot = saved + options.step;
        plus = loss_fn().item();
        slot = saved - options.step;
        minus = loss_fn().item();
      }
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[idx];
      if (std::isnan(numeric) || std::isnan(a)) {
        throw GradCheckError("NaN gradient for parameter '" + p.name + "' at element " + std::to_string(idx) +
                             " (analytic " + std::to_string(a) + ", numeric " + std::to_string(numeric) + ")");
      }
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.probes;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_parameter = p.name;
          result.worst_index = idx;
        }
      }
    }
  }
  return result;
}

}  // namespace vidprism
