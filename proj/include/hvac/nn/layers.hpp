#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hvac/nn/tape.hpp"
#include "hvac/rng.hpp"

namespace hvac::nn {

using ParamList = std::vector<Parameter*>;

/// y = x W + b with W in x out, b a 1 x out row.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, const std::string& name, Rng& rng);

  Var operator()(Tape& tape, Var x);
  /// Tape-free forward; bitwise equal to the recorded one.
  Tensor infer(const Tensor& x) const;
  ParamList params() { return {&w_, &b_}; }
  std::size_t in() const { return w_.value.rows; }
  std::size_t out() const { return w_.value.cols; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

 private:
  Parameter w_, b_;
};

struct LstmState {
  Var h;
  Var c;
};

/// Single LSTM cell. Weights are stacked as W[(D + H) x 4H] over [x, h] with
/// gate blocks ordered input, forget, candidate, output.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input, std::size_t hidden, const std::string& name, Rng& rng);

  LstmState operator()(Tape& tape, Var x, LstmState prev);
  /// Zero state for a batch of `batch` rows.
  LstmState zero_state(Tape& tape, std::size_t batch) const;
  ParamList params() { return {&w_, &b_}; }
  std::size_t input() const { return input_; }
  std::size_t hidden() const { return hidden_; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

 private:
  std::size_t input_ = 0, hidden_ = 0;
  Parameter w_, b_;
};

/// Fully connected stack with tanh between layers and a linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& sizes, const std::string& name, Rng& rng);

  Var operator()(Tape& tape, Var x);
  Tensor infer(const Tensor& x) const;
  ParamList params();
  std::vector<Linear>& layers() { return layers_; }

 private:
  std::vector<Linear> layers_;
};

/// Uniform(-k, k) with k = 1 / sqrt(fan_in).
Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

std::size_t parameter_count(const ParamList& params);
void zero_grads(const ParamList& params);

}  // namespace hvac::nn
