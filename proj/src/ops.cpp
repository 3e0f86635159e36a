// SPDX-License-Identifier: Apache-2.0
#include "vidprism/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vidprism/errors.hpp"

namespace vidprism {

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Numpy-style broadcast plan: per-operand strides aligned to the output rank,
// with stride 0 along broadcast axes.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[rank - 1 - k] = da == 1 ? db : da;
  }
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t total = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t io = 0; io < total; ++io) {
    f(io, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * idx[d];
      ib -= p.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul, div };

Var binary(const Var& a, const Var& b, BinaryKind kind, const char* name) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Tensor out(plan.out);
  const auto& av = a.value();
  const auto& bv = b.value();
  auto o = out.data();
  for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::add: o[io] = av[ia] + bv[ib]; break;
      case BinaryKind::sub: o[io] = av[ia] - bv[ib]; break;
      case BinaryKind::mul: o[io] = av[ia] * bv[ib]; break;
      case BinaryKind::div: o[io] = av[ia] / bv[ib]; break;
    }
  });
  return Var::make(std::move(out), {a, b}, [plan = std::move(plan), kind](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& g = self.grad;
    const auto& av = na.value;
    const auto& bv = nb.value;
    double* ga = na.requires_grad ? na.grad_buffer().data().data() : nullptr;
    double* gb = nb.requires_grad ? nb.grad_buffer().data().data() : nullptr;
    for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t ib) {
      const double gi = g[io];
      switch (kind) {
        case BinaryKind::add:
          if (ga) ga[ia] += gi;
          if (gb) gb[ib] += gi;
          break;
        case BinaryKind::sub:
          if (ga) ga[ia] += gi;
          if (gb) gb[ib] -= gi;
          break;
        case BinaryKind::mul:
          if (ga) ga[ia] += gi * bv[ib];
          if (gb) gb[ib] += gi * av[ia];
          break;
        case BinaryKind::div:
          if (ga) ga[ia] += gi / bv[ib];
          if (gb) gb[ib] -= gi * av[ia] / (bv[ib] * bv[ib]);
          break;
      }
    });
  });
}

// Elementwise unary op with derivative expressed through (x, y).
template <class Fwd, class Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return Var::make(std::move(out), {x}, [deriv](Node& self) {
    Node& nx = *self.parents[0];
    auto& gx = nx.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(nx.value[i], self.value[i]);
  });
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, BinaryKind::add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Var div(const Var& a, const Var& b) { return binary(a, b, BinaryKind::div, "div"); }

Var neg(const Var& x) { return scale(x, -1.0); }

Var scale(const Var& x, double factor) {
  return unary(x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& x, double value) {
  return unary(x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Var broadcast_to(const Var& x, const Shape& shape) {
  auto plan = plan_broadcast(x.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(shape));
  }
  plan.same = false;
  plan.stride_a = aligned_strides(x.shape(), shape);
  plan.stride_b.assign(shape.size(), 0);
  Tensor out(shape);
  const auto& xv = x.value();
  for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t) { out[io] = xv[ia]; });
  return Var::make(std::move(out), {x}, [plan = std::move(plan)](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for_each_broadcast(plan, [&](std::size_t io, std::size_t ia, std::size_t) { gx[ia] += self.grad[io]; });
  });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return Var::make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* g = self.grad.data().data();
    if (na.requires_grad) {
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      double* ga = na.grad_buffer().data().data();
      const double* bv = nb.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* gi = g + i * n;
          const double* bp = bv + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      double* gb = nb.grad_buffer().data().data();
      const double* av = na.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          const double* gi = g + i * n;
          double* gbp = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
        }
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.shape().size() == 2) return add(matmul(x, w), b);
  const Shape original = x.shape();
  const std::size_t in = original.empty() ? 1 : original.back();
  Var flat = reshape(x, {x.size() / std::max<std::size_t>(in, 1), in});
  Var y = add(matmul(flat, w), b);
  Shape out_shape = original;
  out_shape.back() = w.dim(1);
  return reshape(y, out_shape);
}

Var transpose(const Var& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor out({c, r});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return Var::make(std::move(out), {x}, [r, c](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::make(std::move(out), {x}, [](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  auto base = split_axis(first, axis, "concat");
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first) + " along axis " +
                         std::to_string(axis));
      }
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t inner = base.inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    const std::size_t n = extents[k];
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(o * n * inner), n * inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    }
    offset += n;
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return Var::make(std::move(out), std::move(parents), [extents, total, outer = base.outer, inner](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      Node& np = *self.parents[k];
      const std::size_t n = extents[k];
      if (np.requires_grad) {
        auto& gp = np.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < n * inner; ++i) gp[o * n * inner + i] += self.grad[(o * total + offset) * inner + i];
      }
      offset += n;
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  auto s = split_axis(x.shape(), axis, "slice");
  if (begin > end || end > s.n) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of bounds for " +
                     shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  const std::size_t len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < len * s.inner; ++i) out[o * len * s.inner + i] = xv[(o * s.n + begin) * s.inner + i];
  return Var::make(std::move(out), {x}, [s, begin, len](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < len * s.inner; ++i) gx[(o * s.n + begin) * s.inner + i] += self.grad[o * len * s.inner + i];
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  if (x.shape().empty()) throw ShapeError("gather_rows: scalar input");
  const std::size_t n = x.dim(0);
  const std::size_t width = n ? x.size() / n : 0;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (auto r : idx) {
    if (r >= n) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range " + std::to_string(n));
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx.size();
  Tensor out(out_shape);
  const auto& xv = x.value();
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(idx[k] * width), width,
                out.data().begin() + static_cast<std::ptrdiff_t>(k * width));
  return Var::make(std::move(out), {x}, [idx = std::move(idx), width](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < width; ++j) gx[idx[k] * width + j] += self.grad[k * width + j];
  });
}

Var sum(const Var& x, std::size_t axis, bool keepdim) {
  auto s = split_axis(x.shape(), axis, "sum");
  Tensor out(reduced_shape(x.shape(), axis, keepdim), 0.0);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] += xv[(o * s.n + i) * s.inner + j];
  return Var::make(std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.n; ++i)
        for (std::size_t j = 0; j < s.inner; ++j) gx[(o * s.n + i) * s.inner + j] += self.grad[o * s.inner + j];
  });
}

Var mean(const Var& x, std::size_t axis, bool keepdim) {
  auto s = split_axis(x.shape(), axis, "mean");
  if (s.n == 0) throw ShapeError("mean: empty axis");
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(s.n));
}

Var max(const Var& x, std::size_t axis, bool keepdim) {
  auto s = split_axis(x.shape(), axis, "max");
  if (s.n == 0) throw ShapeError("max: empty axis");
  Tensor out(reduced_shape(x.shape(), axis, keepdim));
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.n; ++i) {
        if (xv[(o * s.n + i) * s.inner + j] > xv[(o * s.n + best) * s.inner + j]) best = i;
      }
      arg[o * s.inner + j] = best;
      out[o * s.inner + j] = xv[(o * s.n + best) * s.inner + j];
    }
  }
  return Var::make(std::move(out), {x}, [s, arg = std::move(arg)](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j)
        gx[(o * s.n + arg[o * s.inner + j]) * s.inner + j] += self.grad[o * s.inner + j];
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return Var::make(Tensor::scalar(acc), {x}, [](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean_all(const Var& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Var l2_norm(const Var& x, std::size_t axis, bool keepdim) {
  auto s = split_axis(x.shape(), axis, "l2_norm");
  Tensor out(reduced_shape(x.shape(), axis, keepdim), 0.0);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const double v = xv[(o * s.n + i) * s.inner + j];
        out[o * s.inner + j] += v * v;
      }
  for (double& v : out.data()) v = std::sqrt(v);
  return Var::make(std::move(out), {x}, [s](Node& self) {
    Node& nx = *self.parents[0];
    auto& gx = nx.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const double norm = self.value[o * s.inner + j];
        if (norm == 0.0) continue;  // subgradient 0 at the origin
        const double g = self.grad[o * s.inner + j] / norm;
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = (o * s.n + i) * s.inner + j;
          gx[k] += g * nx.value[k];
        }
      }
  });
}

Var l2_normalize(const Var& x, std::size_t axis, double eps) {
  auto s = split_axis(x.shape(), axis, "l2_normalize");
  const auto& xv = x.value();
  std::vector<double> denom(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const double v = xv[(o * s.n + i) * s.inner + j];
        denom[o * s.inner + j] += v * v;
      }
  std::vector<bool> clamped(denom.size());
  for (std::size_t k = 0; k < denom.size(); ++k) {
    const double norm = std::sqrt(denom[k]);
    clamped[k] = norm <= eps;
    denom[k] = clamped[k] ? eps : norm;
  }
  Tensor out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t k = (o * s.n + i) * s.inner + j;
        out[k] = xv[k] / denom[o * s.inner + j];
      }
  return Var::make(std::move(out), {x}, [s, denom = std::move(denom), clamped = std::move(clamped)](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t r = o * s.inner + j;
        double dot = 0.0;
        if (!clamped[r]) {
          for (std::size_t i = 0; i < s.n; ++i) {
            const std::size_t k = (o * s.n + i) * s.inner + j;
            dot += self.grad[k] * self.value[k];
          }
        }
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = (o * s.n + i) * s.inner + j;
          gx[k] += (self.grad[k] - self.value[k] * dot) / denom[r];
        }
      }
  });
}

Var cosine_similarity(const Var& a, const Var& b, std::size_t axis, double eps) {
  return sum(mul(l2_normalize(a, axis, eps), l2_normalize(b, axis, eps)), axis);
}

Var softmax(const Var& x, std::size_t axis) {
  auto s = split_axis(x.shape(), axis, "softmax");
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.inner; ++j) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) hi = std::max(hi, xv[(o * s.n + i) * s.inner + j]);
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const std::size_t k = (o * s.n + i) * s.inner + j;
        out[k] = std::exp(xv[k] - hi);
        total += out[k];
      }
      for (std::size_t i = 0; i < s.n; ++i) out[(o * s.n + i) * s.inner + j] /= total;
    }
  return Var::make(std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = (o * s.n + i) * s.inner + j;
          dot += self.grad[k] * self.value[k];
        }
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = (o * s.n + i) * s.inner + j;
          gx[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
  });
}

Var log_softmax(const Var& x, std::size_t axis) {
  auto s = split_axis(x.shape(), axis, "log_softmax");
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.inner; ++j) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) hi = std::max(hi, xv[(o * s.n + i) * s.inner + j]);
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) total += std::exp(xv[(o * s.n + i) * s.inner + j] - hi);
      const double lse = hi + std::log(total);
      for (std::size_t i = 0; i < s.n; ++i) {
        const std::size_t k = (o * s.n + i) * s.inner + j;
        out[k] = xv[k] - lse;
      }
    }
  return Var::make(std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.inner; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < s.n; ++i) total += self.grad[(o * s.n + i) * s.inner + j];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t k = (o * s.n + i) * s.inner + j;
          gx[k] += self.grad[k] - std::exp(self.value[k]) * total;
        }
      }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  if (x.shape().empty()) throw ShapeError("layer_norm: scalar input");
  if (eps <= 0) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (d == 0) throw ShapeError("layer_norm: empty feature axis");
  if (gain.size() != d || bias.size() != d || gain.shape().size() != 1 || bias.shape().size() != 1) {
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                     " do not match feature width " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  return Var::make(std::move(out), {x, gain, bias},
                   [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                     Node& nx = *self.parents[0];
                     Node& ng = *self.parents[1];
                     Node& nb = *self.parents[2];
                     const auto& g = self.grad;
                     if (ng.requires_grad || nb.requires_grad) {
                       auto* gg = ng.requires_grad ? &ng.grad_buffer() : nullptr;
                       auto* gb = nb.requires_grad ? &nb.grad_buffer() : nullptr;
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < d; ++j) {
                           if (gg) (*gg)[j] += g[r * d + j] * xhat[r * d + j];
                           if (gb) (*gb)[j] += g[r * d + j];
                         }
                     }
                     if (nx.requires_grad) {
                       auto& gx = nx.grad_buffer();
                       const auto& gain = ng.value;
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double m1 = 0.0;
                         double m2 = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = g[r * d + j] * gain[j];
                           m1 += dxh;
                           m2 += dxh * xhat[r * d + j];
                         }
                         m1 *= inv_d;
                         m2 *= inv_d;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = g[r * d + j] * gain[j];
                           gx[r * d + j] += inv_std[r] * (dxh - m1 - xhat[r * d + j] * m2);
                         }
                       }
                     }
                   });
}

Var interp_time(const Var& x, std::size_t out_len) {
  require_rank(x, 2, "interp_time");
  const std::size_t in_len = x.dim(0);
  const std::size_t d = x.dim(1);
  if (in_len == 0 || out_len == 0) throw ShapeError("interp_time: empty sequence");
  // Source (i0, i1, w1) per output step; exact integer arithmetic keeps
  // endpoints on endpoints.
  struct Tap {
    std::size_t i0, i1;
    double w1;
  };
  std::vector<Tap> taps(out_len);
  for (std::size_t t = 0; t < out_len; ++t) {
    if (in_len == 1 || out_len == 1) {
      taps[t] = {0, 0, 0.0};
      continue;
    }
    const std::size_t num = t * (in_len - 1);
    const std::size_t den = out_len - 1;
    const std::size_t i0 = num / den;
    const std::size_t rem = num % den;
    taps[t] = {i0, std::min(i0 + 1, in_len - 1), static_cast<double>(rem) / static_cast<double>(den)};
  }
  Tensor out({out_len, d});
  const auto& xv = x.value();
  for (std::size_t t = 0; t < out_len; ++t) {
    const auto& tap = taps[t];
    for (std::size_t c = 0; c < d; ++c) {
      out[t * d + c] = (1.0 - tap.w1) * xv[tap.i0 * d + c] + tap.w1 * xv[tap.i1 * d + c];
    }
  }
  return Var::make(std::move(out), {x}, [taps = std::move(taps), d](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const auto& tap = taps[t];
      for (std::size_t c = 0; c < d; ++c) {
        gx[tap.i0 * d + c] += (1.0 - tap.w1) * self.grad[t * d + c];
        gx[tap.i1 * d + c] += tap.w1 * self.grad[t * d + c];
      }
    }
  });
}

Var conv_time(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t out_len) {
  require_rank(x, 2, "conv_time");
  require_rank(w, 3, "conv_time weight");
  const std::size_t in_len = x.dim(0);
  const std::size_t cin = x.dim(1);
  const std::size_t k = w.dim(0);
  const std::size_t cout = w.dim(2);
  if (w.dim(1) != cin) throw ShapeError("conv_time: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  if (b.shape() != Shape{cout}) throw ShapeError("conv_time: bias " + shape_str(b.shape()));
  if (stride == 0 || k == 0) throw ShapeError("conv_time: stride and kernel must be positive");
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  Tensor out({out_len, cout});
  for (std::size_t t = 0; t < out_len; ++t) {
    double* yt = out.data().data() + t * cout;
    for (std::size_t o = 0; o < cout; ++o) yt[o] = bv[o];
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(in_len)) continue;
      gemm_nn(xv.data().data() + static_cast<std::size_t>(src) * cin, wv.data().data() + j * cin * cout, yt, 1, cin, cout);
    }
  }
  return Var::make(std::move(out), {x, w, b}, [=](Node& self) {
    Node& nx = *self.parents[0];
    Node& nw = *self.parents[1];
    Node& nb = *self.parents[2];
    const auto& g = self.grad;
    if (nb.requires_grad) {
      auto& gb = nb.grad_buffer();
      for (std::size_t t = 0; t < out_len; ++t)
        for (std::size_t o = 0; o < cout; ++o) gb[o] += g[t * cout + o];
    }
    double* gx = nx.requires_grad ? nx.grad_buffer().data().data() : nullptr;
    double* gw = nw.requires_grad ? nw.grad_buffer().data().data() : nullptr;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* gt = g.data().data() + t * cout;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(in_len)) continue;
        const auto s = static_cast<std::size_t>(src);
        const double* wj = nw.value.data().data() + j * cin * cout;
        const double* xs = nx.value.data().data() + s * cin;
        for (std::size_t i = 0; i < cin; ++i) {
          if (gx) {
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) acc += gt[o] * wj[i * cout + o];
            gx[s * cin + i] += acc;
          }
          if (gw) {
            double* gwi = gw + j * cin * cout + i * cout;
            for (std::size_t o = 0; o < cout; ++o) gwi[o] += xs[i] * gt[o];
          }
        }
      }
    }
  });
}

}  // namespace vidprism
