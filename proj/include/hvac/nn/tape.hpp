#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvac/nn/tensor.hpp"

namespace hvac::nn {

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order, which
/// is a topological order, so backward walks them once in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward adds into `p.grad`.
  Var param(Parameter& p);
  Var record(Tensor value, std::vector<std::size_t> parents, Backward backward);

  /// Seeds d loss / d loss = 1 and propagates. `loss` must be 1 x 1.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient slot of a parent, allocated on first use.
  Tensor& grad_slot(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Linear algebra and structure.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
/// Scales every row of a (m x n) by the matching entry of a column (m x 1).
Var mul_col(Var a, Var col);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Per-row column pick: out[i] = a[i, index[i]], shape m x 1.
Var pick(Var a, std::span<const int> index);

// Elementwise.
Var tanh(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var softplus(Var a);
/// Clamps to [lo, hi]; gradient passes only strictly inside the interval.
Var clip(Var a, double lo, double hi);
/// Elementwise minimum; ties send the gradient to the first argument.
Var minimum(Var a, Var b);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// Row-wise log-softmax.
Var log_softmax_rows(Var a);
/// Tape-free row-wise log-softmax, same arithmetic as the recorded op.
Tensor log_softmax_rows(const Tensor& a);

}  // namespace hvac::nn
