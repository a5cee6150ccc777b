#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <deque>
#include <unordered_map>
#include <vector>

#include "hieratt/rng.hpp"
#include "hieratt/tensor.hpp"

namespace hieratt {

enum class OpKind {
  Constant,
  Input,
  Parameter,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Affine,
  Tanh,
  Sigmoid,
  Elu,
  EmbeddingLookup,
  Dropout,
  Reshape,
  Transpose,
  Concat,
  SliceRows,
  PoolMean,
  Sum,
  Mean,
  Softmax,
  LogSoftmax,
  CrossEntropy,
  Conv1dCausal,
  Conv2d,
  OuterAdd,
  Gather,
  Custom,
};

std::string_view op_name(OpKind kind);

/// Named trainable tensor with an accumulated gradient of the same shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Ordered collection of parameters. Addresses stay stable for the lifetime
/// of the store, so models keep raw pointers into it.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so every
/// input of node i has an id below i and a single reverse sweep suffices.
class Tape {
 public:
  /// Receives the gradient flowing into the node's output.
  using Backward = std::function<void(Tape&, const Tensor&)>;

  explicit Tape(bool grad_enabled = true, std::uint64_t dropout_seed = 0);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Grad-enabled leaf owned by the tape.
  Var input(Tensor value);
  /// Leaf that borrows the parameter value; one node per parameter per tape.
  Var param(Parameter& p);

  /// Appends a node. `backward` may be empty, which marks the op as having no
  /// backward rule; reaching it during backward() raises NoBackwardError.
  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, Backward backward);

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Tensor& value(int id) const;
  OpKind kind(int id) const { return nodes_[id].kind; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(int id);
  void accumulate(int id, const Tensor& g);
  /// Gradient of a node after backward(); nullptr when nothing reached it.
  const Tensor* grad(Var v) const;

  void backward(Var loss);

  /// Adds `scale` times each parameter node's gradient into Parameter::grad.
  void accumulate_param_grads(double scale = 1.0);

  SplitMix64& rng() { return rng_; }

  void clear();

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Parameter* param = nullptr;
    std::vector<int> inputs;
    Backward backward;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  bool grad_enabled_;
  SplitMix64 rng_;
  std::deque<Node> nodes_;  // stable references across appends
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace hieratt
