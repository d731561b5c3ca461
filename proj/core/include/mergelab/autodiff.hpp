#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mergelab/tensor.hpp"

namespace mergelab::nn {

class Tape;

// Handle to a node on a Tape. Valid for the lifetime of the tape.
struct Value {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool defined() const { return tape != nullptr; }
  const Tensor& val() const;
  const Tensor& grad() const;
};

// Reverse-mode tape for one forward pass. Nodes are created in topological
// order; backward() walks them in reverse. Gradient buffers are allocated
// lazily, only for nodes that participate in a backward pass.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Input data; never receives a gradient.
  Value constant(Tensor t);
  // Trainable parameter; gradient is accumulated during backward().
  Value leaf(Tensor t);

  const Tensor& value(Value v) const { return nodes_[v.id].value; }
  const Tensor& grad(Value v) const;
  bool needs_grad(Value v) const { return nodes_[v.id].needs_grad; }

  // Ops. All validate shapes and raise structural errors on mismatch.
  Value conv2d(Value x, Value w, std::int64_t stride, std::int64_t pad);
  Value group_norm(Value x, Value gamma, Value beta, std::int64_t num_groups, float eps);
  Value relu(Value x);
  Value avg_pool(Value x, std::int64_t k);
  Value global_avg_pool(Value x);
  Value linear(Value x, Value w, Value b);
  Value add(Value a, Value b);
  // Scalar node holding the mean cross-entropy of a [batch, classes] logit
  // tensor. Labels are captured by value.
  Value cross_entropy(Value logits, std::span<const std::int32_t> labels);

  // Seeds d(root)/d(root) = 1 and propagates to every reachable node that
  // needs a gradient. root must be scalar.
  void backward(Value root);

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until needed
    bool needs_grad = false;
    // Captures parent ids and any saved tensors. Null for inputs.
    std::function<void(Tape&, Node&)> backprop;
  };

  Value push(Tensor value, bool needs_grad, std::function<void(Tape&, Node&)> backprop);
  Tensor& ensure_grad(std::int32_t id);
  friend struct Value;

  std::vector<Node> nodes_;
};

}  // namespace mergelab::nn
