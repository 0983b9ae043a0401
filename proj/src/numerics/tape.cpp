#include "patmod/tape.hpp"

#include "patmod/error.hpp"

namespace patmod::num {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  const std::size_t idx = params_.size();
  index_.emplace(name, idx);
  params_.push_back({std::move(name), std::move(value), trainable});
  return idx;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto idx = find(name);
  if (!idx) throw ContractError("unknown parameter '" + name + "'");
  return *idx;
}

std::size_t ParameterSet::scalar_count(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    if (p.trainable && p.name.starts_with(prefix)) total += p.value.size();
  }
  return total;
}

Var Tape::push(Node node) {
  if (frozen_) throw ContractError("tape is frozen after backward()");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = recording_;
  return push(std::move(node));
}

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
  if (params_ == nullptr) {
    params_ = &params;
    parameter_nodes_.assign(params.size(), -1);
  } else if (params_ != &params) {
    throw ContractError("a tape can bind parameters of one model only");
  }
  if (index >= params.size()) throw ContractError("parameter index out of range");
  if (parameter_nodes_.size() < params.size()) parameter_nodes_.resize(params.size(), -1);
  if (parameter_nodes_[index] >= 0) {
    return Var(this, static_cast<std::uint32_t>(parameter_nodes_[index]));
  }
  Node node;
  node.external = &params[index].value;
  node.parameter = static_cast<std::int64_t>(index);
  node.requires_grad = recording_ && params[index].trainable;
  Var v = push(std::move(node));
  parameter_nodes_[index] = v.id();
  return v;
}

Var Tape::record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  bool needs = false;
  if (recording_) {
    for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
  }
  if (needs) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
    node.requires_grad = true;
  }
  return push(std::move(node));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.get().shape()) node.grad = Tensor(node.get().shape(), 0.0);
  return node.grad;
}

GradientList Tape::backward(Var loss) {
  if (frozen_) throw ContractError("backward() called twice on the same tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");

  grad(loss.id()).fill(1.0);
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, static_cast<std::uint32_t>(id));
  }
  frozen_ = true;

  GradientList grads;
  if (params_ != nullptr) {
    grads.reserve(params_->size());
    for (std::size_t i = 0; i < params_->size(); ++i) {
      const std::int64_t node_id = i < parameter_nodes_.size() ? parameter_nodes_[i] : -1;
      if (node_id >= 0 && !nodes_[node_id].grad.empty()) {
        grads.push_back(nodes_[node_id].grad);
      } else {
        grads.emplace_back((*params_)[i].value.shape(), 0.0);
      }
    }
  }
  return grads;
}

}  // namespace patmod::num
