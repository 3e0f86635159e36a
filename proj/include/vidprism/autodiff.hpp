// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidprism/tensor.hpp"

namespace vidprism {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. `backward` reads `grad` of this node
/// and accumulates into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialised grad buffer with the value's shape.
  Tensor& grad_buffer();
};

/// Handle to a tape node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimisers and finite-difference probes.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  void zero_grad();

  Node* node() const noexcept { return node_.get(); }
  const NodePtr& node_ptr() const noexcept { return node_; }

  /// Builds an interior node. Parents and `backward` are dropped when no
  /// parent requires grad or recording is disabled.
  static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

 private:
  NodePtr node_;
};

/// A leaf sharing `v`'s value but cut off from the tape.
Var detach(const Var& v);
Var constant(Tensor value);

/// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
/// Throws ContractError for a non-scalar or non-finite loss.
void backward(const Var& loss);

bool grad_enabled() noexcept;

/// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct Parameter {
  std::string name;
  Var var;
};

/// Owns the trainable leaves of a model. Names are unique; initial values
/// depend only on (seed, name).
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  Var uniform(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out);
  Var zeros(const std::string& name, Shape shape);
  Var ones(const std::string& name, Shape shape);
  Var add(const std::string& name, Tensor value);

  std::span<const Parameter> parameters() const noexcept { return params_; }
  std::span<Parameter> parameters() noexcept { return params_; }
  const Parameter* find(const std::string& name) const;
  std::size_t scalar_count() const;
  std::uint64_t seed() const noexcept { return seed_; }
  void zero_grad();

 private:
  std::uint64_t seed_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vidprism
