// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vidprism/autodiff.hpp"

// Differentiable primitives. Every op validates shapes up front and throws
// ShapeError on mismatch. Binary elementwise ops broadcast numpy-style.
namespace vidprism {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& x);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double value);
Var broadcast_to(const Var& x, const Shape& shape);

Var exp(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);
/// Exact (erf-based) GELU.
Var gelu(const Var& x);

/// [m x k] * [k x n]
Var matmul(const Var& a, const Var& b);
/// x [.. x in] * w [in x out] + b [out]
Var linear(const Var& x, const Var& w, const Var& b);
Var transpose(const Var& x);
Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of x (along axis 0) in the given order; repeats allowed.
Var gather_rows(const Var& x, std::span<const std::size_t> rows);

Var sum(const Var& x, std::size_t axis, bool keepdim = false);
Var mean(const Var& x, std::size_t axis, bool keepdim = false);
/// Reduction max; the gradient goes to the first maximal element.
Var max(const Var& x, std::size_t axis, bool keepdim = false);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

Var l2_norm(const Var& x, std::size_t axis, bool keepdim = false);
/// x / max(||x||, eps) along `axis`.
Var l2_normalize(const Var& x, std::size_t axis, double eps = 1e-8);
/// <a, b> / (max(||a||, eps) * max(||b||, eps)), reducing `axis`.
Var cosine_similarity(const Var& a, const Var& b, std::size_t axis, double eps = 1e-8);

Var softmax(const Var& x, std::size_t axis);
Var log_softmax(const Var& x, std::size_t axis);

/// Normalises over the last axis with the biased variance estimator.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Piecewise-linear resampling of x [T_in x D] to [out_len x D] along time.
/// Output t samples source position t * (T_in - 1) / (out_len - 1); a
/// single source frame is broadcast.
Var interp_time(const Var& x, std::size_t out_len);

/// Strided temporal convolution. x [T_in x C_in], w [k x C_in x C_out],
/// b [C_out]. Output step t reads inputs t*stride - (k-1)/2 + j, j < k, with
/// zeros outside [0, T_in).
Var conv_time(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t out_len);

}  // namespace vidprism
