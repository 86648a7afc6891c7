#include "hvac/nn/layers.hpp"

#include <array>
#include <cmath>

#include "hvac/nn/kernels.hpp"

namespace hvac::nn {

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.uniform(-k, k);
  return t;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

Linear::Linear(std::size_t in, std::size_t out, const std::string& name, Rng& rng)
    : w_(name + ".w", uniform_init(in, out, in, rng)),
      b_(name + ".b", uniform_init(1, out, in, rng)) {}

Var Linear::operator()(Tape& tape, Var x) {
  return add_row(matmul(x, tape.param(w_)), tape.param(b_));
}

Tensor Linear::infer(const Tensor& x) const {
  const Tensor& w = w_.value;
  if (x.cols != w.rows) {
    throw ShapeError("linear: shape mismatch " + x.shape_string() + " vs " + w.shape_string());
  }
  Tensor y(x.rows, w.cols);
  gemm({false, false, x.rows, w.cols, x.cols, x.data.data(), x.cols, w.data.data(), w.cols,
        y.data.data(), y.cols, false});
  for (std::size_t i = 0; i < y.rows; ++i) {
    for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += b_.value.data[j];
  }
  return y;
}

LstmCell::LstmCell(std::size_t input, std::size_t hidden, const std::string& name,
                   Rng& rng)
    : input_(input),
      hidden_(hidden),
      w_(name + ".w", uniform_init(input + hidden, 4 * hidden, input + hidden, rng)),
      b_(name + ".b", uniform_init(1, 4 * hidden, input + hidden, rng)) {
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b_.value.data[j] = 1.0;
}

LstmState LstmCell::zero_state(Tape& tape, std::size_t batch) const {
  return {tape.constant(Tensor(batch, hidden_)), tape.constant(Tensor(batch, hidden_))};
}

LstmState LstmCell::operator()(Tape& tape, Var x, LstmState prev) {
  if (x.cols() != input_ || prev.h.cols() != hidden_ || prev.c.cols() != hidden_ ||
      prev.h.rows() != x.rows() || prev.c.rows() != x.rows()) {
    throw ShapeError("lstm_cell: input " + x.value().shape_string() + " h " +
                     prev.h.value().shape_string() + " c " +
                     prev.c.value().shape_string() + " for D=" +
                     std::to_string(input_) + " H=" + std::to_string(hidden_));
  }
  const std::array<Var, 2> xh{x, prev.h};
  Var z = add_row(matmul(concat_cols(xh), tape.param(w_)), tape.param(b_));
  const std::size_t h = hidden_;
  Var i = sigmoid(slice_cols(z, 0, h));
  Var f = sigmoid(slice_cols(z, h, 2 * h));
  Var g = tanh(slice_cols(z, 2 * h, 3 * h));
  Var o = sigmoid(slice_cols(z, 3 * h, 4 * h));
  Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, const std::string& name, Rng& rng) {
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    layers_.emplace_back(sizes[l], sizes[l + 1], name + "." + std::to_string(l), rng);
  }
}

Var Mlp::operator()(Tape& tape, Var x) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l](tape, x);
    if (l + 1 < layers_.size()) x = tanh(x);
  }
  return x;
}

Tensor Mlp::infer(const Tensor& x) const {
  Tensor y = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    y = layers_[l].infer(y);
    if (l + 1 < layers_.size()) {
      for (double& v : y.data) v = std::tanh(v);
    }
  }
  return y;
}

ParamList Mlp::params() {
  ParamList out;
  for (Linear& l : layers_) {
    for (Parameter* p : l.params()) out.push_back(p);
  }
  return out;
}

}  // namespace hvac::nn
