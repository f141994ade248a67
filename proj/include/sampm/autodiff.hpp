#pragma once

// Reverse-mode automatic differentiation over sampm::Tensor.
//
// A Tape records every executed operation in execution order, which is a
// topological order of the computation graph. Var is a lightweight handle to
// one recorded node. Backward walks the tape once from the root towards the
// first node and accumulates gradients into every node that requires them.
//
// Broadcasting is limited to identical shapes or a one-element operand.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sampm/tensor.hpp"

namespace sampm::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;
  /// Accumulated gradient after Tape::backward (zeros if none reached this node).
  Tensor grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Backward rule of one node: receives the node's output gradient and
  /// accumulates into its inputs via grad_sink().
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);

  /// Appends an operation node. The backward rule is dropped when no input
  /// requires a gradient. Throws NumericError if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Reverse sweep from a one-element root. Returns the number of nodes whose
  /// backward rule ran. A second call on the same tape is an error.
  std::size_t backward(Var root);

  /// Gradient buffer of `v`, zero-initialised on first use; nullptr when `v`
  /// does not require a gradient. Intended for backward rules.
  Tensor* grad_sink(Var v);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  Tensor grad(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::string op;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

enum class Activation { kGelu, kRelu };

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var linear(Var x, Var weight, Var bias);
Var concat(std::span<const Var> xs, std::size_t axis);
Var concat(std::initializer_list<Var> xs, std::size_t axis);

// Normalisation.
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var sigmoid(Var x);
Var gelu(Var x);
Var relu(Var x);
Var activation(Var x, Activation act);

// Reductions to a one-element tensor.
Var sum(Var x);
Var mean(Var x);

/// Copy of the value without a gradient path.
Var detach(Var x);

// Image/token rearrangements.
/// out[i] = x[index[i]] for a flat index map; the backward pass scatter-adds.
Var gather(Var x, Shape out_shape, std::vector<std::size_t> index);
/// (C,H,W) -> (gh*gw, C*p*p): non-overlapping p×p patches in row-major grid
/// order; features ordered channel, then row, then column inside the patch.
Var patchify(Var image, std::size_t patch);
/// (gh*gw, p*p) -> (gh*p, gw*p): inverse of patchify for one channel.
Var unpatchify(Var tokens, std::size_t grid_h, std::size_t grid_w, std::size_t patch);
/// (H,W) -> (H/k, W/k) mean over k×k blocks.
Var avg_pool(Var x, std::size_t k);
/// (H,W) -> (H*f, W*f) bilinear resampling with half-pixel centres and edge clamping.
Var upsample_bilinear(Var x, std::size_t factor);

}  // namespace sampm::ad
