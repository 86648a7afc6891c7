#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hvac/nn/checkpoint.hpp"
#include "hvac/nn/gradcheck.hpp"
#include "hvac/nn/kernels.hpp"
#include "hvac/nn/layers.hpp"
#include "hvac/nn/optim.hpp"
#include "hvac/nn/tape.hpp"
#include "hvac/rng.hpp"
#include "support/nn_oracles.hpp"

using namespace hvac;
using namespace hvac::nn;
using namespace hvac::oracle;

namespace {

Tensor naive_gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.cols : a.rows, k = ta ? a.rows : a.cols;
  const std::size_t n = tb ? b.rows : b.cols;
  Tensor c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        s += (ta ? a(kk, i) : a(i, kk)) * (tb ? b(j, kk) : b(kk, j));
      }
      c(i, j) = s;
    }
  }
  return c;
}

}  // namespace

TEST(Tensor, ExamplesAndShapes) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::scalar(0.0))).value().data[0], 0.5);
  Rng rng(1);
  Tensor x = random_tensor(3, 4, rng);
  EXPECT_EQ(matmul(tape.constant(Tensor::identity(3)), tape.constant(x)).value(), x);
  EXPECT_EQ(clip(tape.constant(Tensor::scalar(1.3)), 0.8, 1.2).value().data[0], 1.2);
  EXPECT_THROW(Tensor::from(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, ShapeErrorsNameBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(4, 5));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  EXPECT_THROW(add_row(a, tape.constant(Tensor(1, 2))), ShapeError);
  EXPECT_THROW(slice_cols(a, 2, 4), ShapeError);
  const std::array<Var, 2> parts{a, b};
  EXPECT_THROW(concat_cols(parts), ShapeError);
}

TEST(Tape, SquareDerivative) {
  Parameter x("x", Tensor::scalar(3.0));
  Tape tape;
  tape.backward(square(tape.param(x)));
  EXPECT_DOUBLE_EQ(x.grad.data[0], 6.0);
}

TEST(Tape, SumOfConstantsHasZeroGradient) {
  Parameter p("p", Tensor(2, 2, 1.5));
  Tape tape;
  Var unused = tape.param(p);
  (void)unused;
  Var loss = sum(tape.constant(Tensor(3, 3, 2.0)));
  tape.backward(loss);
  EXPECT_EQ(loss.value().data[0], 18.0);
  for (double g : p.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Tape, NonScalarLossRejected) {
  Parameter p("p", Tensor(2, 2, 1.0));
  Tape tape;
  EXPECT_THROW(tape.backward(tanh(tape.param(p))), ShapeError);
}

TEST(Tape, VisitsEachNodeOnce) {
  Parameter p("p", Tensor(1, 3, 0.5));
  Tape tape;
  Var x = tape.param(p);
  Var y = mul(x, x);              // x used twice
  Var z = add(y, tanh(x));        // and again
  Var loss = sum(add(z, tape.constant(Tensor(1, 3, 1.0))));
  tape.backward(loss);
  // param, mul, tanh, add, add, sum; the constant needs no gradient.
  EXPECT_EQ(tape.backward_visits(), 6u);
  for (double g : p.grad.data) EXPECT_NEAR(g, 2 * 0.5 + 1 - std::tanh(0.5) * std::tanh(0.5), 1e-15);
}

TEST(Tape, RandomMlpMatchesFiniteDifferences) {
  Rng rng(7);
  Mlp mlp({6, 8, 8, 3}, "mlp", rng);
  const Tensor x = random_tensor(4, 6, rng);
  const Tensor w = random_tensor(4, 3, rng);
  const auto r = gradcheck(mlp.params(), [&](Tape& t) {
    return project(t, mlp(t, t.constant(x)), w);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst_param << "[" << r.worst_index << "]";
  EXPECT_EQ(r.checked, parameter_count(mlp.params()));
}

TEST(Tape, EveryOpPassesGradcheck) {
  for (const OpCase& op : op_cases()) {
    EXPECT_LT(check_op(op, 20240501), kTol) << op.name;
  }
}

TEST(Tape, BackwardIsDeterministic) {
  Rng rng(11);
  Mlp mlp({5, 7, 2}, "m", rng);
  const Tensor x = random_tensor(3, 5, rng);
  Tape tape;
  Var loss = sum(square(mlp(tape, tape.constant(x))));
  zero_grads(mlp.params());
  tape.backward(loss);
  std::vector<Tensor> first;
  for (Parameter* p : mlp.params()) first.push_back(p->grad);
  zero_grads(mlp.params());
  tape.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(mlp.params()[i]->grad, first[i]);
}

TEST(Tape, NoOpMutatesInputs) {
  Rng rng(3);
  for (const OpCase& op : op_cases()) {
    std::vector<Parameter> inputs;
    Tensor proj_w;
    std::function<Var(Tape&, std::vector<Var>&)> fn;
    op.setup(rng, inputs, proj_w, fn);
    std::vector<Tensor> before;
    for (const Parameter& p : inputs) before.push_back(p.value);
    Tape tape;
    std::vector<Var> vars;
    for (Parameter& p : inputs) vars.push_back(tape.param(p));
    Var y = fn(tape, vars);
    tape.backward(sum(y));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      EXPECT_EQ(inputs[i].value, before[i]) << op.name;
      EXPECT_EQ(tape.value(vars[i].id), before[i]) << op.name;
    }
  }
}

#ifndef NDEBUG
TEST(TapeDeathTest, NonFiniteValueTrips) {
  Tape tape;
  Var x = tape.constant(Tensor::scalar(-1.0));
  EXPECT_DEATH(nn::log(x), "non-finite");
}
#endif

TEST(Lstm, ZeroWeightsGiveZeroHidden) {
  Rng rng(5);
  LstmCell cell(3, 4, "l", rng);
  cell.weight().value.fill(0.0);
  cell.bias().value.fill(0.0);
  Tape tape;
  LstmState s{tape.constant(random_tensor(2, 4, rng)), tape.constant(Tensor(2, 4))};
  LstmState out = cell(tape, tape.constant(random_tensor(2, 3, rng)), s);
  for (double v : out.h.value().data) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SaturatedForgetCarriesCell) {
  Rng rng(6);
  const std::size_t H = 4;
  LstmCell cell(2, H, "l", rng);
  cell.weight().value.fill(0.0);
  for (std::size_t j = 0; j < 4 * H; ++j) {
    cell.bias().value.data[j] = j < H ? -60.0 : (j < 2 * H ? 60.0 : 0.3);
  }
  Tape tape;
  const Tensor c0 = random_tensor(1, H, rng);
  LstmState out = cell(tape, tape.constant(random_tensor(1, 2, rng)),
                       {tape.constant(random_tensor(1, H, rng)), tape.constant(c0)});
  for (std::size_t j = 0; j < H; ++j) EXPECT_NEAR(out.c.value().data[j], c0.data[j], 1e-20);
}

TEST(Lstm, ForgetBiasInitialisedToOne) {
  Rng rng(8);
  LstmCell cell(3, 5, "l", rng);
  const double k = 1.0 / std::sqrt(8.0);
  for (std::size_t j = 0; j < 20; ++j) {
    if (j >= 5 && j < 10) {
      EXPECT_EQ(cell.bias().value.data[j], 1.0);
    } else {
      EXPECT_LE(std::abs(cell.bias().value.data[j]), k);
    }
  }
  for (double v : cell.weight().value.data) EXPECT_LE(std::abs(v), k);
  EXPECT_EQ(cell.weight().value.rows, 8u);
  EXPECT_EQ(cell.weight().value.cols, 20u);
}

TEST(Lstm, FiveStepUnrollMatchesFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t D = dim(rng, 1, 4), H = dim(rng, 1, 5), B = dim(rng, 1, 3);
    LstmCell cell(D, H, "l", rng);
    Parameter h0("h0", random_tensor(B, H, rng, -1, 1));
    Parameter c0("c0", random_tensor(B, H, rng, -1, 1));
    std::vector<Parameter> xs;
    for (int t = 0; t < 5; ++t) xs.emplace_back("x" + std::to_string(t), random_tensor(B, D, rng));
    const Tensor w = random_tensor(B, H, rng);
    ParamList params = cell.params();
    params.push_back(&h0);
    params.push_back(&c0);
    for (Parameter& x : xs) params.push_back(&x);
    const auto r = gradcheck(params, [&](Tape& t) {
      LstmState s{t.param(h0), t.param(c0)};
      for (Parameter& x : xs) s = cell(t, t.param(x), s);
      return add(project(t, s.h, w), sum(s.c));
    });
    ASSERT_LT(r.max_rel_error, kTol) << "trial " << trial << " " << r.worst_param;
  }
}

TEST(Adam, OneStepDescends) {
  Parameter th("theta", Tensor::scalar(1.0));
  Adam adam({&th}, {.lr = 0.1});
  Tape tape;
  tape.backward(square(tape.param(th)));
  adam.step();
  EXPECT_LT(th.value.data[0], 1.0);
  EXPECT_NEAR(th.value.data[0], 0.9, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Parameter th("theta", Tensor::row({0.3, -0.7}));
  Adam adam({&th}, {.lr = 0.1});
  th.zero_grad();
  for (int i = 0; i < 5; ++i) adam.step();
  EXPECT_EQ(th.value, Tensor::row({0.3, -0.7}));
}

TEST(Adam, ConvergesOnQuadratic) {
  Parameter th("theta", Tensor::row({1.0, -1.5}));
  Adam adam({&th}, {.lr = 0.05});
  const Tensor scales = Tensor::row({1.0, 10.0});
  for (int i = 0; i < 200; ++i) {
    adam.zero_grad();
    Tape tape;
    tape.backward(sum(mul(square(tape.param(th)), tape.constant(scales))));
    adam.step();
  }
  const double norm = std::hypot(th.value.data[0], th.value.data[1]);
  EXPECT_LT(norm, 1e-3);
}

TEST(Adam, GradientClipping) {
  Parameter a("a", Tensor::row({0.0, 0.0}));
  a.grad = Tensor::row({3.0, 4.0});
  Adam adam({&a}, {.lr = 0.1, .max_grad_norm = 1.0});
  EXPECT_DOUBLE_EQ(adam.step(), 5.0);
  // First Adam step moves each coordinate by lr regardless of scale.
  EXPECT_NEAR(a.value.data[0], -0.1, 1e-6);
  EXPECT_NEAR(a.value.data[1], -0.1, 1e-6);
}

TEST(Gemm, SerialMatchesParallelAndNaive) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const bool ta = rng.uniform() < 0.5, tb = rng.uniform() < 0.5;
    const std::size_t m = dim(rng, 1, 70), n = dim(rng, 1, 70), k = dim(rng, 1, 70);
    const Tensor a = ta ? random_tensor(k, m, rng) : random_tensor(m, k, rng);
    const Tensor b = tb ? random_tensor(n, k, rng) : random_tensor(k, n, rng);
    const Tensor init = random_tensor(m, n, rng);
    for (bool acc : {false, true}) {
      Tensor cs = init, cp = init;
      GemmArgs g{ta, tb, m, n, k, a.data.data(), a.cols, b.data.data(), b.cols,
                 cs.data.data(), n, acc};
      gemm_serial(g);
      g.c = cp.data.data();
      gemm_parallel(g);
      EXPECT_EQ(cs, cp);
      const Tensor ref = naive_gemm(a, ta, b, tb);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        EXPECT_NEAR(cs.data[i], ref.data[i] + (acc ? init.data[i] : 0.0), 1e-10);
      }
    }
  }
}

TEST(Checkpoint, RoundTripAndLayout) {
  Rng rng(13);
  Mlp mlp({3, 4, 2}, "pi", rng);
  Checkpoint ck;
  ck.meta["scenario"] = "S4";
  ck.add(mlp.params());
  ck.add("obs_mean", Tensor::row({1.0, -2.5}));
  const std::string bytes = encode_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 4), "HVCK");
  EXPECT_EQ(bytes[4], 1);
  // obs_mean[0] = 1.0 is stored little-endian as 00 .. 00 f0 3f.
  const std::string one = bytes.substr(bytes.size() - 16, 8);
  EXPECT_EQ(one, std::string("\0\0\0\0\0\0\xf0\x3f", 8));

  Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.meta.at("scenario"), "S4");
  Mlp other({3, 4, 2}, "pi", rng);
  back.load_into(other.params());
  for (std::size_t i = 0; i < mlp.params().size(); ++i) {
    EXPECT_EQ(other.params()[i]->value, mlp.params()[i]->value);
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint ck;
  ck.add("w", Tensor(2, 2, 1.0));
  std::string bytes = encode_checkpoint(ck);
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointError);
  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  EXPECT_THROW(decode_checkpoint(wrong_version), CheckpointError);
  Parameter p("w", Tensor(3, 2));
  EXPECT_THROW(ck.load_into({&p}), CheckpointError);
  Parameter q("missing", Tensor(2, 2));
  EXPECT_THROW(ck.load_into({&q}), CheckpointError);
}
