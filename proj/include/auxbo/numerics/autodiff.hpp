#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "auxbo/numerics/errors.hpp"
#include "auxbo/numerics/tensor.hpp"

namespace auxbo {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Tensor value;
};

/// Owns the trainable tensors of one model. Ids are insertion indices and are
/// stable for the lifetime of the store, which makes them usable as keys for
/// optimizer state and checkpoints.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value) {
    value.requires_grad = true;
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
  }
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](ParamId id) { return params_.at(id); }
  const Parameter& operator[](ParamId id) const { return params_.at(id); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

 private:
  std::vector<Parameter> params_;
};

using GradientMap = std::map<ParamId, Tensor>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t numel() const { return value().numel(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// them backwards is a valid topological order.
///
/// Reuse policy: the graph is not consumed by backward(). Every call clears
/// the accumulated node gradients first, so calling it twice on the same loss
/// returns the same map.
class Tape {
 public:
  /// Backward closure: reads grad(self) and accumulates into parent grads.
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When false, ops record values only (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor t) {
    nodes_.push_back(Node{std::move(t), {}, nullptr, false, kNoParam, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Leaf bound to a parameter. Repeated calls for the same parameter return
  /// the same node so gradients from every use accumulate.
  Var parameter(ParameterStore& store, ParamId pid) {
    auto key = std::make_pair(&store, pid);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{store[pid].value, {}, nullptr, grad_enabled_, pid, &store});
    int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(key, id);
    return {this, id};
  }

  /// Appends the result of an op. The backward closure is dropped when no
  /// parent needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_)
      for (const Var& p : parents) needs = needs || nodes_[p.id].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : nullptr, needs, kNoParam, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, zero-initialized on first access.
  std::vector<double>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  GradientMap backward(Var loss) {
    require(loss.tape == this, "backward: loss belongs to a different tape");
    const Tensor& lv = nodes_[loss.id].value;
    require(lv.rank() == 0, "backward: loss must have shape [], got " + shape_str(lv.shape));
    if (!std::isfinite(lv.data[0])) throw NumericFailure("backward: loss is not finite");
    for (Node& n : nodes_) n.grad.clear();
    GradientMap out;
    if (!nodes_[loss.id].needs_grad) return zero_gradients(out);
    grad(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
    for (auto& [key, id] : param_nodes_) {
      Node& n = nodes_[id];
      Tensor g(n.value.shape);
      if (!n.grad.empty()) g.data = n.grad;
      out[key.second] = std::move(g);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr ParamId kNoParam = static_cast<ParamId>(-1);

  struct Node {
    Tensor value;
    std::vector<double> grad;
    BackwardFn backward;
    bool needs_grad;
    ParamId param;
    ParameterStore* store;
  };

  GradientMap& zero_gradients(GradientMap& out) {
    for (auto& [key, id] : param_nodes_) out[key.second] = Tensor(nodes_[id].value.shape);
    return out;
  }

  std::deque<Node> nodes_;  // deque: references stay valid while appending
  std::map<std::pair<ParameterStore*, ParamId>, int> param_nodes_;
  bool grad_enabled_ = true;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace auxbo
