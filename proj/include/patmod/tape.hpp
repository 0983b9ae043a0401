#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "patmod/tensor.hpp"

namespace patmod::num {

class Tape;

/// A tensor recorded on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::uint32_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named parameters of a model instance. Names are unique.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  /// Total scalar count, optionally restricted to names starting with prefix.
  std::size_t scalar_count(const std::string& prefix = "") const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parameter gradients, indexed like the ParameterSet they belong to.
using GradientList = std::vector<Tensor>;

/// Append-only record of one forward pass. Nodes are stored in creation order,
/// which is a topological order; backward() sweeps it once in reverse and
/// freezes the tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable input that is not a model parameter (gradient checks).
  Var leaf(Tensor value);
  /// Binds a parameter; repeated calls with the same index return the same node.
  Var parameter(const ParameterSet& params, std::size_t index);

  /// Records an op result. The backward function runs only when at least one
  /// input requires a gradient and the tape is recording.
  Var record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward);

  bool recording() const { return recording_; }
  bool frozen() const { return frozen_; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::uint32_t id) const { return nodes_[id].get(); }
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::uint32_t input(std::uint32_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  /// Gradient of a node during or after backward (zero-initialised on first use).
  Tensor& grad(std::uint32_t id);
  const Tensor& grad(Var v) { return grad(v.id()); }

  /// Reverse sweep from a one-element loss. Returns one gradient per parameter
  /// of the bound ParameterSet (zeros for parameters the loss does not touch).
  GradientList backward(Var loss);

 private:
  struct Node {
    // Parameters are read in place from their ParameterSet.
    const Tensor& get() const { return external ? *external : value; }

    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    std::int64_t parameter = -1;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<std::int64_t> parameter_nodes_;
  const ParameterSet* params_ = nullptr;
  bool recording_;
  bool frozen_ = false;
};

}  // namespace patmod::num
