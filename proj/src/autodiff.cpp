// SPDX-License-Identifier: Apache-2.0
#include "vidprism/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "vidprism/errors.hpp"
#include "vidprism/random.hpp"

namespace vidprism {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var Var::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

Var detach(const Var& v) { return Var(v.value(), false); }

Var constant(Tensor value) { return Var(std::move(value), false); }

void backward(const Var& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!std::isfinite(loss.item())) throw ContractError("backward() on a non-finite loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var ParameterStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, Var(std::move(value), true)});
  return params_.back().var;
}

Var ParameterStore::uniform(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng = Rng(seed_).split(name);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return add(name, std::move(t));
}

Var ParameterStore::zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape), 0.0)); }

Var ParameterStore::ones(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape), 1.0)); }

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

}  // namespace vidprism
