#include "hvac/nn/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "hvac/nn/kernels.hpp"

namespace hvac::nn {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents,
                 Backward backward) {
  // NaN/Inf trip in debug builds only; release keeps the hot path lean.
  assert(value.all_finite() && "non-finite value produced on tape");
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) n.requires_grad |= nodes_[p].requires_grad;
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows != n.value.rows) {
    n.grad = Tensor(n.value.rows, n.value.cols);
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.rows != 1 || lv.cols != 1) {
    throw ShapeError("backward needs a scalar loss, got " + lv.shape_string());
  }
  for (Node& n : nodes_) n.grad.fill(0.0);
  grad_slot(loss.id).data[0] = 1.0;
  visits_ = 0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    ++visits_;
    if (n.param) {
      Tensor& g = n.param->grad;
      if (!g.same_shape(n.grad)) g = Tensor(n.grad.rows, n.grad.cols);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& slot = t.grad_slot(id);
  for (std::size_t i = 0; i < g.size(); ++i) slot.data[i] += g.data[i];
}

// Elementwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, dfdx](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      slot.data[i] += g.data[i] * dfdx(x.data[i], y.data[i]);
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.rows) {
    throw ShapeError("matmul: shape mismatch " + A.shape_string() + " vs " +
                     B.shape_string());
  }
  Tensor C(A.rows, B.cols);
  gemm({false, false, A.rows, B.cols, A.cols, A.data.data(), A.cols,
        B.data.data(), B.cols, C.data.data(), C.cols, false});
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(C), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& G = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& dA = t.grad_slot(ia);  // G * B^T
      gemm({false, true, A.rows, A.cols, B.cols, G.data.data(), G.cols,
            B.data.data(), B.cols, dA.data.data(), dA.cols, true});
    }
    if (t.requires_grad(ib)) {
      Tensor& dB = t.grad_slot(ib);  // A^T * G
      gemm({true, false, B.rows, B.cols, A.rows, A.data.data(), A.cols,
            G.data.data(), G.cols, dB.data.data(), dB.cols, true});
    }
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.value().data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
    accumulate(t, ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= b.value().data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad(self));
    if (t.requires_grad(ib)) {
      Tensor& slot = t.grad_slot(ib);
      const Tensor& g = t.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) slot.data[i] -= g.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.value().data[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& slot = t.grad_slot(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) slot.data[i] += g.data[i] * bv.data[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& slot = t.grad_slot(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) slot.data[i] += g.data[i] * av.data[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) {
    throw ShapeError("add_row: shape mismatch " + A.shape_string() + " vs " +
                     R.shape_string());
  }
  Tensor y = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) y(i, j) += R.data[j];
  }
  const std::size_t ia = a.id, ir = row.id;
  return a.tape->record(std::move(y), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, g);
    if (t.requires_grad(ir)) {
      Tensor& slot = t.grad_slot(ir);
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) slot.data[j] += g(i, j);
      }
    }
  });
}

Var mul_col(Var a, Var col) {
  const Tensor& A = a.value();
  const Tensor& C = col.value();
  if (C.cols != 1 || C.rows != A.rows) {
    throw ShapeError("mul_col: shape mismatch " + A.shape_string() + " vs " +
                     C.shape_string());
  }
  Tensor y = A;
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < A.cols; ++j) y(i, j) *= C.data[i];
  }
  const std::size_t ia = a.id, ic = col.id;
  return a.tape->record(std::move(y), {ia, ic}, [ia, ic](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& C = t.value(ic);
    if (t.requires_grad(ia)) {
      Tensor& slot = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) slot(i, j) += g(i, j) * C.data[i];
      }
    }
    if (t.requires_grad(ic)) {
      Tensor& slot = t.grad_slot(ic);
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) slot.data[i] += g(i, j) * A(i, j);
      }
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: shape mismatch " +
                       parts[0].value().shape_string() + " vs " +
                       p.value().shape_string());
    }
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor y(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy(v.data.begin() + i * v.cols, v.data.begin() + (i + 1) * v.cols,
                y.data.begin() + i * cols + offsets[k]);
    }
  }
  Tape* tape = parts[0].tape;
  return tape->record(std::move(y), ids, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& slot = t.grad_slot(ids[k]);
      for (std::size_t i = 0; i < slot.rows; ++i) {
        for (std::size_t j = 0; j < slot.cols; ++j) {
          slot(i, j) += g(i, offsets[k] + j);
        }
      }
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  if (begin > end || end > A.cols) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " + A.shape_string());
  }
  const std::size_t w = end - begin;
  Tensor y(A.rows, w);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t j = 0; j < w; ++j) y(i, j) = A(i, begin + j);
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, begin, w](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < w; ++j) slot(i, begin + j) += g(i, j);
    }
  });
}

Var pick(Var a, std::span<const int> index) {
  const Tensor& A = a.value();
  if (index.size() != A.rows) {
    throw ShapeError("pick: " + std::to_string(index.size()) +
                     " indices for " + A.shape_string());
  }
  std::vector<int> idx(index.begin(), index.end());
  Tensor y(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= A.cols) {
      throw ShapeError("pick: index " + std::to_string(idx[i]) +
                       " out of range for " + A.shape_string());
    }
    y.data[i] = A(i, static_cast<std::size_t>(idx[i]));
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia, idx](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      slot(i, static_cast<std::size_t>(idx[i])) += g.data[i];
    }
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a,
               [](double x) {
                 return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                 : std::exp(x) / (1.0 + std::exp(x));
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) {
                 return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                 : std::exp(x) / (1.0 + std::exp(x));
               });
}

Var clip(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var minimum(Var a, Var b) {
  require_same(a.value(), b.value(), "minimum");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor y(A.rows, A.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = std::min(A.data[i], B.data[i]);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool first = A.data[i] <= B.data[i];
      const std::size_t target = first ? ia : ib;
      if (t.requires_grad(target)) t.grad_slot(target).data[i] += g.data[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self).data[0];
    for (double& v : t.grad_slot(ia).data) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor log_softmax_rows(const Tensor& A) {
  Tensor y(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double m = A(i, 0);
    for (std::size_t j = 1; j < A.cols; ++j) m = std::max(m, A(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) z += std::exp(A(i, j) - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < A.cols; ++j) y(i, j) = A(i, j) - lz;
  }
  return y;
}

Var log_softmax_rows(Var a) {
  Tensor y = log_softmax_rows(a.value());
  const std::size_t ia = a.id;
  return a.tape->record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) gs += g(i, j);
      for (std::size_t j = 0; j < g.cols; ++j) {
        slot(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
      }
    }
  });
}

}  // namespace hvac::nn
