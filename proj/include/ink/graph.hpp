#ifndef INK_GRAPH_HPP
#define INK_GRAPH_HPP

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ink/losses.hpp"
#include "ink/ops.hpp"
#include "ink/tensor.hpp"

namespace ink {

enum class OpKind {
  Input,
  Param,
  Conv2d,
  TransposedConv2,
  MaxPool2,
  UpsampleNearest2,
  Relu,
  Sigmoid,
  ConcatChannels,
  Add,
  DiceLoss,
  FocalLoss,
  WeightedSum,
  WeightedMean,
};

/// A named weight tensor. Gradients accumulate in the tensor's grad buffer.
template <typename S>
struct Parameter {
  std::string name;
  Tensor4<S> value;
};

/// Ordered, named parameter collection. Iteration order is insertion order,
/// which keeps optimizer updates and checkpoint layout deterministic.
template <typename S>
class ParamSet {
 public:
  Parameter<S>& add(const std::string& name, Shape4 shape) {
    if (index_.count(name)) throw UsageError("ParamSet: duplicate parameter " + name);
    index_[name] = items_.size();
    items_.push_back(std::make_unique<Parameter<S>>(Parameter<S>{name, Tensor4<S>(shape)}));
    return *items_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("ParamSet: no parameter named " + name);
    return *items_[it->second];
  }

  std::size_t size() const { return items_.size(); }
  Parameter<S>& operator[](std::size_t i) { return *items_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return *items_[i]; }

  Index total_elements() const {
    Index t = 0;
    for (const auto& p : items_) t += p->value.size();
    return t;
  }

  void zero_grads() {
    for (auto& p : items_) p->value.zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Define-by-run tape. Ops execute eagerly as nodes are appended; inputs
/// always refer to earlier nodes, so the graph is acyclic by construction
/// and reverse id order is a valid backward schedule.
template <typename S>
class Graph {
 public:
  using NodeId = int;

  NodeId input(Tensor4<S> v) {
    Node n;
    n.kind = OpKind::Input;
    n.out = std::move(v);
    return push(std::move(n));
  }

  NodeId param(Parameter<S>& p) {
    if (!bound_.insert(&p).second)
      throw UsageError("Graph: parameter " + p.name + " bound to more than one node");
    Node n;
    n.kind = OpKind::Param;
    n.bound = &p;
    n.out = p.value;
    return push(std::move(n));
  }

  NodeId conv2d(NodeId x, NodeId w, NodeId b, Index stride, Index padding) {
    Node n;
    n.kind = OpKind::Conv2d;
    n.in = {check(x), check(w), check(b)};
    n.stride = stride;
    n.padding = padding;
    n.out = ink::conv2d(value(x), value(w), bias_vec(b), stride, padding);
    return push(std::move(n));
  }

  NodeId transposed_conv2(NodeId x, NodeId w, NodeId b) {
    Node n;
    n.kind = OpKind::TransposedConv2;
    n.in = {check(x), check(w), check(b)};
    n.out = ink::transposed_conv2(value(x), value(w), bias_vec(b));
    return push(std::move(n));
  }

  NodeId maxpool2(NodeId x) {
    Node n;
    n.kind = OpKind::MaxPool2;
    n.in = {check(x)};
    auto r = ink::maxpool2(value(x));
    n.out = std::move(r.output);
    n.argmax = std::move(r.argmax);
    return push(std::move(n));
  }

  NodeId upsample_nearest2(NodeId x) {
    Node n;
    n.kind = OpKind::UpsampleNearest2;
    n.in = {check(x)};
    n.out = ink::upsample_nearest2(value(x));
    return push(std::move(n));
  }

  NodeId relu(NodeId x) {
    Node n;
    n.kind = OpKind::Relu;
    n.in = {check(x)};
    n.out = ink::relu(value(x));
    return push(std::move(n));
  }

  NodeId sigmoid(NodeId x) {
    Node n;
    n.kind = OpKind::Sigmoid;
    n.in = {check(x)};
    n.out = ink::sigmoid(value(x));
    return push(std::move(n));
  }

  NodeId concat_channels(NodeId a, NodeId b) {
    Node n;
    n.kind = OpKind::ConcatChannels;
    n.in = {check(a), check(b)};
    n.out = ink::concat_channels(value(a), value(b));
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) {
    Node n;
    n.kind = OpKind::Add;
    n.in = {check(a), check(b)};
    n.out = ink::add(value(a), value(b));
    return push(std::move(n));
  }

  NodeId dice_loss(NodeId pred, Tensor4<S> target, S smooth_eps) {
    Node n;
    n.kind = OpKind::DiceLoss;
    n.in = {check(pred)};
    n.a = smooth_eps;
    n.out = scalar_tensor(ink::dice_loss(value(pred), target, smooth_eps));
    n.constant = std::move(target);
    return push(std::move(n));
  }

  NodeId focal_loss(NodeId pred, Tensor4<S> target, S gamma) {
    Node n;
    n.kind = OpKind::FocalLoss;
    n.in = {check(pred)};
    n.a = gamma;
    n.out = scalar_tensor(ink::focal_loss(value(pred), target, gamma));
    n.constant = std::move(target);
    return push(std::move(n));
  }

  NodeId weighted_sum(NodeId x, NodeId y, S wx, S wy) {
    Node n;
    n.kind = OpKind::WeightedSum;
    n.in = {check(x), check(y)};
    n.a = wx;
    n.b = wy;
    require_same_shape(value(x), value(y), "weighted_sum");
    n.out = Tensor4<S>(value(x).shape());
    n.out.data() = wx * value(x).data() + wy * value(y).data();
    return push(std::move(n));
  }

  /// Scalar sum(x * coeffs) / size(x); a deterministic probe loss.
  NodeId weighted_mean(NodeId x, Tensor4<S> coeffs) {
    Node n;
    n.kind = OpKind::WeightedMean;
    n.in = {check(x)};
    require_same_shape(value(x), coeffs, "weighted_mean");
    n.out = scalar_tensor((value(x).data() * coeffs.data()).sum() / S(coeffs.size()));
    n.constant = std::move(coeffs);
    return push(std::move(n));
  }

  NodeId combined_loss(NodeId pred, const Tensor4<S>& target, const LossConfig& cfg) {
    cfg.validate();
    NodeId d = dice_loss(pred, target, S(cfg.smooth_eps));
    NodeId f = focal_loss(pred, target, S(cfg.gamma));
    return weighted_sum(d, f, S(cfg.dice_weight), S(cfg.focal_weight));
  }

  const Tensor4<S>& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].out; }

  S scalar(NodeId id) const {
    const Tensor4<S>& t = value(id);
    if (t.size() != 1) throw ShapeError("scalar() on tensor of shape " + t.shape().str());
    return t.data()[0];
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar root. Parameter gradients accumulate
  /// into their grad buffers (callers zero them between steps).
  void backward(NodeId root) {
    Tensor4<S>& root_out = nodes_[static_cast<size_t>(root)].out;
    if (root_out.size() != 1)
      throw ShapeError("backward: root must be scalar, got " + root_out.shape().str());
    if (!std::isfinite(static_cast<double>(root_out.data()[0])))
      throw DivergenceError("backward: loss is not finite");
    for (auto& n : nodes_) n.out.zero_grad();
    root_out.grad()[0] = S(1);
    for (int id = root; id >= 0; --id) backward_node(nodes_[static_cast<size_t>(id)]);
  }

 private:
  struct Node {
    OpKind kind = OpKind::Input;
    std::vector<NodeId> in;
    Parameter<S>* bound = nullptr;
    Index stride = 1, padding = 0;
    std::vector<Index> argmax;
    Tensor4<S> constant;
    S a = 0, b = 0;
    Tensor4<S> out;
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId check(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw UsageError("Graph: input node id out of range");
    return id;
  }

  static Tensor4<S> scalar_tensor(S v) {
    Tensor4<S> t({1, 1, 1, 1});
    t.data()[0] = v;
    return t;
  }

  VecX<S> bias_vec(NodeId id) const {
    const Tensor4<S>& t = value(id);
    return t.data();
  }

  Tensor4<S> grad_tensor(const Node& n) const {
    Tensor4<S> g(n.out.shape());
    g.data() = n.out.grad();
    return g;
  }

  void accumulate(NodeId id, const typename Tensor4<S>::Storage& g) {
    nodes_[static_cast<size_t>(id)].out.grad() += g;
  }

  void backward_node(Node& n) {
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Param:
        n.bound->value.grad() += n.out.grad();
        break;
      case OpKind::Conv2d: {
        auto g = ink::conv2d_backward(value(n.in[0]), value(n.in[1]), n.stride,
                                      n.padding, grad_tensor(n));
        accumulate(n.in[0], g.input.data());
        accumulate(n.in[1], g.kernel.data());
        accumulate(n.in[2], g.bias);
        break;
      }
      case OpKind::TransposedConv2: {
        auto g = ink::transposed_conv2_backward(value(n.in[0]), value(n.in[1]),
                                                grad_tensor(n));
        accumulate(n.in[0], g.input.data());
        accumulate(n.in[1], g.kernel.data());
        accumulate(n.in[2], g.bias);
        break;
      }
      case OpKind::MaxPool2: {
        auto g = ink::maxpool2_backward(value(n.in[0]).shape(), n.argmax, grad_tensor(n));
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::UpsampleNearest2: {
        auto g = ink::upsample_nearest2_backward(value(n.in[0]).shape(), grad_tensor(n));
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::Relu: {
        auto g = ink::relu_backward(value(n.in[0]), grad_tensor(n));
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::Sigmoid: {
        auto g = ink::sigmoid_backward(n.out, grad_tensor(n));
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::ConcatChannels: {
        auto g = ink::concat_channels_backward(value(n.in[0]).shape(),
                                               value(n.in[1]).shape(), grad_tensor(n));
        accumulate(n.in[0], g.first.data());
        accumulate(n.in[1], g.second.data());
        break;
      }
      case OpKind::Add: {
        accumulate(n.in[0], n.out.grad());
        accumulate(n.in[1], n.out.grad());
        break;
      }
      case OpKind::DiceLoss: {
        auto g = ink::dice_loss_backward(value(n.in[0]), n.constant, n.a, n.out.grad()[0]);
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::FocalLoss: {
        auto g = ink::focal_loss_backward(value(n.in[0]), n.constant, n.a, n.out.grad()[0]);
        accumulate(n.in[0], g.data());
        break;
      }
      case OpKind::WeightedSum: {
        accumulate(n.in[0], (n.a * n.out.grad()).eval());
        accumulate(n.in[1], (n.b * n.out.grad()).eval());
        break;
      }
      case OpKind::WeightedMean: {
        accumulate(n.in[0],
                   (n.out.grad()[0] / S(n.constant.size()) * n.constant.data()).eval());
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_set<const Parameter<S>*> bound_;
};

using Graphd = Graph<double>;

}  // namespace ink

#endif  // INK_GRAPH_HPP
