#include "hieratt/autodiff.hpp"

#include "hieratt/error.hpp"

namespace hieratt {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Affine: return "affine";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Elu: return "elu";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::Dropout: return "dropout";
    case OpKind::Reshape: return "reshape";
    case OpKind::Transpose: return "transpose";
    case OpKind::Concat: return "concat";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::PoolMean: return "pool_mean";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Conv1dCausal: return "conv1d_causal";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::OuterAdd: return "outer_add";
    case OpKind::Gather: return "gather";
    case OpKind::Custom: return "custom";
  }
  return "unknown";
}

Parameter& ParamStore::add(std::string name, Tensor init) {
  if (index_.contains(name)) throw Error("parameter store: duplicate name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.shape());
  p->value = std::move(init);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw Error("parameter store: no parameter named " + std::string(name));
  return *p;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Tape::Tape(bool grad_enabled, std::uint64_t dropout_seed) : grad_enabled_(grad_enabled), rng_(dropout_seed) {}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::input(Tensor value) {
  Node n;
  n.kind = OpKind::Input;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.kind = OpKind::Parameter;
  n.borrowed = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, Backward backward) {
  Node n;
  n.kind = kind;
  n.owned = std::move(value);
  n.inputs.reserve(inputs.size());
  bool any = false;
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw Error(std::string(op_name(kind)) + ": operand from a different tape");
    n.inputs.push_back(v.id());
    any = any || nodes_[v.id()].requires_grad;
  }
  n.requires_grad = grad_enabled_ && any;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Tape::value(int id) const { return nodes_[id].value(); }

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value().shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id) += g;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss from a different tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) throw DimensionError("backward: non-scalar root of shape " + shape_string(lv.shape()));
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || n.inputs.empty()) continue;
    if (!n.backward) {
      throw NoBackwardError(std::string(op_name(n.kind)) + ": no backward rule registered");
    }
    n.backward(*this, n.grad);
  }
}

void Tape::accumulate_param_grads(double scale) {
  for (auto& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    auto& dst = n.param->grad.storage();
    const auto& src = n.grad.storage();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

}  // namespace hieratt
