#pragma once

// Tape-based reverse-mode differentiation over the kernels in ops.hpp.
//
// A Graph records every value produced during a forward pass together with a
// closure that maps the node's upstream gradient onto its parents. Nodes are
// appended in evaluation order, so walking the tape backwards is a valid
// topological order and visits each node exactly once.

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "matte/ops.hpp"
#include "matte/tensor.hpp"

namespace matte {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

template <typename T>
class Graph {
 public:
  /// Receives the upstream gradient of the node being processed.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>&)>;

  Var leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Var{nodes_.size() - 1};
  }

  /// Appends a computed node. It requires grad iff any parent does.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    for (const Var p : parents) needs = needs || node(p).requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return !node(v).grad.empty(); }

  /// Gradient of the last backward root with respect to `v`; zeros if `v`
  /// was unreachable from the root.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) throw std::logic_error("grad requested for a node without requires_grad");
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Gradient accumulator for a parent, allocated on first use; null when the
  /// parent does not require grad.
  Tensor<T>* accum(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
  }

  void backward(Var root) {
    if (nodes_.empty() || !root.valid() || root.id >= nodes_.size()) {
      throw std::logic_error("backward called before a forward pass was recorded");
    }
    if (nodes_[root.id].value.size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + nodes_[root.id].value.shape().str());
    }
    for (Node& n : nodes_) n.grad = Tensor<T>();
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad = Tensor<T>(nodes_[root.id].value.shape(), T(1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      // The closure may append to other nodes' grads only; copy the upstream
      // gradient so accumulation into a parent cannot alias it.
      const Tensor<T> upstream = n.grad;
      n.backward(*this, upstream);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("invalid graph variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("invalid graph variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

/// Creates one leaf per parameter tensor on first use so that gradients can
/// be looked up by the parameter's address after backward.
template <typename T>
class ParamBinder {
 public:
  explicit ParamBinder(Graph<T>& graph, bool requires_grad = true)
      : graph_(graph), requires_grad_(requires_grad) {}

  Var operator()(const Tensor<T>& param) {
    const auto it = leaves_.find(&param);
    if (it != leaves_.end()) return it->second;
    const Var v = graph_.leaf(param, requires_grad_);
    leaves_.emplace(&param, v);
    return v;
  }

  /// Routes later lookups of `param` to an existing variable.
  void bind(const Tensor<T>& param, Var v) { leaves_[&param] = v; }

  std::optional<Var> find(const Tensor<T>& param) const {
    const auto it = leaves_.find(&param);
    if (it == leaves_.end()) return std::nullopt;
    return it->second;
  }

  Graph<T>& graph() { return graph_; }

 private:
  Graph<T>& graph_;
  bool requires_grad_;
  std::unordered_map<const Tensor<T>*, Var> leaves_;
};

// Differentiable operators. Non-Var tensor arguments are treated as constants.

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, const ConvGeometry& geo);
template <typename T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::size_t groups, T eps);
template <typename T>
Var relu(Graph<T>& g, Var x);
template <typename T>
Var sigmoid(Graph<T>& g, Var x);
template <typename T>
Var window_softmax(Graph<T>& g, Var x, std::size_t window);
template <typename T>
Var sum_pool(Graph<T>& g, Var x, std::size_t k, std::size_t s);
template <typename T>
Var scale(Graph<T>& g, Var x, T factor);
/// factor * x + offset, elementwise.
template <typename T>
Var affine(Graph<T>& g, Var x, T factor, T offset);
template <typename T>
Var nearest_upsample(Graph<T>& g, Var x, std::size_t factor);
template <typename T>
Var pixel_shuffle_compose(Graph<T>& g, const std::array<Var, 4>& maps);
template <typename T>
Var mul_broadcast(Graph<T>& g, Var x, Var map);
template <typename T>
Var mul(Graph<T>& g, Var a, Var b);
template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b);
template <typename T>
Var pad_to(Graph<T>& g, Var x, std::size_t h, std::size_t w);
template <typename T>
Var crop_to(Graph<T>& g, Var x, std::size_t h, std::size_t w);

template <typename T>
Var sum(Graph<T>& g, Var x);
/// Scalar <x, weights>; turns any operator output into a scalar probe.
template <typename T>
Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& weights);
/// mean(sqrt((x - target)^2 + eps^2)) over every element.
template <typename T>
Var charbonnier_mean(Graph<T>& g, Var x, const Tensor<T>& target, T eps);
/// alpha * fg + (1 - alpha) * bg with alpha (H x W x 1) broadcast over colour channels.
template <typename T>
Var composite(Graph<T>& g, Var alpha, const Tensor<T>& fg, const Tensor<T>& bg);
/// Known trimap levels overwrite the prediction; 0.5 passes it through.
template <typename T>
Var fuse_with_trimap(Graph<T>& g, Var raw_alpha, const Tensor<T>& trimap);
/// ca * a + cb * b for scalars a, b.
template <typename T>
Var linear_combine(Graph<T>& g, Var a, Var b, T ca, T cb);

}  // namespace matte
