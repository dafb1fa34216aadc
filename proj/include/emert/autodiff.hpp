// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "emert/tensor.hpp"

namespace emert::diff {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the computation graph. A node owns its upstream edges, so a
// graph lives exactly as long as the loss (or any other handle) that
// references it. Parameters are long-lived leaves with no parents.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first touched; same shape as value afterwards
  std::vector<NodePtr> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  // Gradient; a zero tensor of value's shape if backward never reached it.
  const Tensor& grad() const { return node_->ensure_grad(); }
  Tensor& grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

// Trainable leaf.
Var parameter(Tensor value);
// Leaf that never receives gradient.
Var constant(Tensor value);

// Scopes graph recording off on the current thread (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Reverse sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
// accumulates into every reachable grad, visiting each node once.
void backward(const Var& loss);

// ---- differentiable ops; all 2-D unless stated ----

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// x[m,n] + bias[1,n] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
Var scale(const Var& x, double factor);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
Var softmax_rows(const Var& x);

// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(const Var& x, double lambda);
// Same value, cut from the graph.
Var detach(const Var& x);

Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
// out[i] = x[index[i]]; backward scatter-adds.
Var gather_rows(const Var& x, std::vector<std::size_t> index);
// x holds `groups` consecutive blocks of `group_len` rows; returns the
// per-block row mean, shape [groups, cols].
Var group_mean(const Var& x, std::size_t groups, std::size_t group_len);
// Shifts rows within each block of `group_len` by `offset` (out[t] =
// x[t - offset]), zero-filling rows that fall outside the block.
Var group_shift(const Var& x, std::size_t groups, std::size_t group_len, int offset);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Mean multi-class cross-entropy of logits[B,K] against class indices.
Var cross_entropy(const Var& logits, std::span<const int> targets);
// Mean over rows of the per-row sum of Huber penalties.
Var huber(const Var& pred, const Tensor& target, double delta);

// Scaled dot-product multi-head attention, per sample. q is [batch*tq, d],
// k and v are [batch*tk, d] in sample-major row order; d must divide into
// `heads`. When `weights` is non-null it receives the attention
// probabilities laid out as [batch*heads*tq, tk].
Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t tq,
              std::size_t tk, std::size_t heads, Tensor* weights = nullptr);

}  // namespace emert::diff
