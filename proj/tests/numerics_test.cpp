#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "priorformer/autodiff.hpp"
#include "priorformer/errors.hpp"
#include "priorformer/tensor.hpp"
#include "test_util.hpp"

using namespace priorformer;
using priorformer::testing::op_gradient_error;
using priorformer::testing::random_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor a = Tensor::matrix({{1.5, -2.0}, {0.25, 4.0}});
  EXPECT_EQ(kernels::matmul(Tensor::identity(2), a), a);
}

TEST(Matmul, HandExpandedProduct) {
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor b = Tensor::matrix({{1}, {1}});
  EXPECT_EQ(kernels::matmul(a, b), Tensor::matrix({{3}, {7}}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  Tensor a({2, 3}), b({2, 3});
  try {
    kernels::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] and [2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, AssociativeOnRandomChains) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 6);
    const std::size_t m = ext(rng), k = ext(rng), n = ext(rng), p = ext(rng);
    Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n}), c = random_tensor(rng, {n, p});
    Tensor left = kernels::matmul(kernels::matmul(a, b), c);
    Tensor right = kernels::matmul(a, kernels::matmul(b, c));
    EXPECT_LE(priorformer::testing::max_abs_diff(left, right), 1e-9);
  }
}

TEST(Softmax, Examples) {
  Tensor half = kernels::softmax(Tensor::vector({0, 0}), 0);
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);

  for (double c : {-1e3, 0.0, 7.5, 1e3}) {
    Tensor third = kernels::softmax(Tensor::vector({c, c, c}), 0);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(third[i], 1.0 / 3.0, 1e-15);
  }

  // mpmath, 30 digits: e/(e+e^2), e^2/(e+e^2)
  Tensor s = kernels::softmax(Tensor::vector({1, 2}), 0);
  EXPECT_NEAR(s[0], 0.268941421369995120748840758178, 1e-15);
  EXPECT_NEAR(s[1], 0.731058578630004879251159241822, 1e-15);
}

TEST(Softmax, AxisOutOfRange) { EXPECT_THROW(kernels::softmax(Tensor({2, 2}), 2), DimensionError); }

TEST(Softmax, RowsStochasticAndShiftInvariant) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 7);
    const std::size_t r = ext(rng), c = ext(rng);
    const std::size_t axis = trial % 2;
    Tensor x = random_tensor(rng, {r, c}, -20, 20);
    Tensor y = kernels::softmax(x, axis);
    const std::size_t lines = axis == 0 ? c : r, len = axis == 0 ? r : c;
    for (std::size_t l = 0; l < lines; ++l) {
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double v = axis == 0 ? y.at(i, l) : y.at(l, i);
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
    const double shift = std::uniform_real_distribution<double>(-50, 50)(rng);
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += shift;
    EXPECT_LE(priorformer::testing::max_abs_diff(kernels::softmax(shifted, axis), y), 1e-12);
  }
}

TEST(LayerNorm, Examples) {
  Tensor ones = Tensor::vector({1, 1});
  Tensor zeros = Tensor::vector({0, 0});
  Tensor flat = kernels::layer_norm(Tensor::vector({4, 4, 4}), Tensor::vector({1, 1, 1}), Tensor::vector({0, 0, 0}), 1e-5);
  for (double v : flat.data()) EXPECT_EQ(v, 0.0);

  Tensor unit = kernels::layer_norm(Tensor::vector({1, -1}), ones, zeros, 1e-300);
  EXPECT_DOUBLE_EQ(unit[0], 1.0);
  EXPECT_DOUBLE_EQ(unit[1], -1.0);

  Tensor three = kernels::layer_norm(Tensor::vector({1, 2, 3}), Tensor::vector({1, 1, 1}), Tensor::vector({0, 0, 0}), 1e-5);
  EXPECT_NEAR(three[0], -1.22473568590839016899828621464, 1e-14);
  EXPECT_NEAR(three[1], 0.0, 1e-15);
  EXPECT_NEAR(three[2], 1.22473568590839016899828621464, 1e-14);
}

TEST(LayerNorm, RowMomentsProperty) {
  std::mt19937_64 rng(3);
  const double eps = 1e-5;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + trial % 9;
    Tensor x = random_tensor(rng, {4, d}, -3, 3);
    Tensor y = kernels::layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}), eps);
    for (std::size_t r = 0; r < 4; ++r) {
      double mx = 0, my = 0;
      for (std::size_t j = 0; j < d; ++j) mx += x.at(r, j), my += y.at(r, j);
      mx /= d, my /= d;
      double vx = 0, vy = 0;
      for (std::size_t j = 0; j < d; ++j) {
        vx += (x.at(r, j) - mx) * (x.at(r, j) - mx);
        vy += y.at(r, j) * y.at(r, j);
      }
      vx /= d, vy /= d;
      EXPECT_LE(std::abs(my), 1e-10);
      EXPECT_NEAR(vy, vx / (vx + eps), 1e-6);
    }
  }
}

TEST(Gelu, Examples) {
  EXPECT_EQ(kernels::gelu(0.0), 0.0);
  EXPECT_NEAR(kernels::gelu(30.0), 30.0, 1e-12);
  EXPECT_NEAR(kernels::gelu(-30.0), 0.0, 1e-12);
  // mpmath, 30 digits, tanh form at x=1
  EXPECT_NEAR(kernels::gelu(1.0), 0.841191990608276704781995777045, 1e-15);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  Var x = g.variable(Tensor::matrix({{1, -2, 3}, {4, 5, -6}}));
  g.backward(ad::sum(x));
  Tensor grad = g.grad(x);
  for (double v : grad.data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, SquareGivesTwiceX) {
  Graph g;
  Var x = g.variable(Tensor::scalar(-1.75));
  g.backward(ad::mul(x, x));
  EXPECT_EQ(g.grad(x).item(), -3.5);
}

TEST(Backward, NonScalarLossRejected) {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Backward, RepeatedCallsDoNotAccumulate) {
  Graph g;
  Var x = g.variable(Tensor::vector({1, 2}));
  Var loss = ad::sum(ad::mul(x, x));
  g.backward(loss);
  g.backward(loss);
  EXPECT_EQ(g.grad(x), Tensor::vector({2, 4}));
}

TEST(Backward, ConstantsGetNoGradient) {
  Graph g;
  Var c = g.constant(Tensor::vector({1, 2}));
  Var x = g.variable(Tensor::vector({3, 4}));
  g.backward(ad::sum(ad::mul(c, x)));
  EXPECT_EQ(g.grad(c), Tensor::vector({0, 0}));
  EXPECT_EQ(g.grad(x), Tensor::vector({1, 2}));
}

TEST(Backward, NonFiniteValueSurfaces) {
  Graph g;
  Var x = g.variable(Tensor::vector({1e300, 1e300}));
  EXPECT_THROW(ad::mul(x, x), NumericError);
}

TEST(FiniteDiff, Examples) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor(rng, {3, 4});
  Tensor g = finite_diff_gradient(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.data()) s += v;
        return s;
      },
      x);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);

  Tensor sq = finite_diff_gradient([](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(3.0));
  EXPECT_NEAR(sq.item(), 6.0, 1e-8);
  EXPECT_THROW(finite_diff_gradient([](const Tensor&) { return 0.0; }, x, 0.0), ContractError);
}

// Every differentiable op against central differences on random inputs.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(1000 + GetParam());
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
  const double tol = 1e-4;
  using V = const std::vector<Var>&;
  // Layer-norm widths start at 3: a 2-wide row normalises to +-1 whatever the
  // input, so its input gradient is ~1e-9 and central differences cannot resolve it.

  auto check = [&](const char* name, const priorformer::testing::OpBuilder& op, std::vector<Tensor> in) {
    EXPECT_LE(op_gradient_error(op, in, rng), tol) << name << " seed " << GetParam();
  };

  check("matmul", [](Graph&, V v) { return ad::matmul(v[0], v[1]); },
        {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})});
  check("add", [](Graph&, V v) { return ad::add(v[0], v[1]); }, {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})});
  check("sub", [](Graph&, V v) { return ad::sub(v[0], v[1]); }, {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})});
  check("mul", [](Graph&, V v) { return ad::mul(v[0], v[1]); }, {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})});
  check("scale", [](Graph&, V v) { return ad::scale(v[0], -2.5); }, {random_tensor(rng, {m, n})});
  check("add_scalar", [](Graph&, V v) { return ad::add_scalar(v[0], 0.3); }, {random_tensor(rng, {m})});
  check("add_bias", [](Graph&, V v) { return ad::add_bias(v[0], v[1]); }, {random_tensor(rng, {m, n}), random_tensor(rng, {n})});
  check("transpose", [](Graph&, V v) { return ad::transpose(v[0]); }, {random_tensor(rng, {m, n})});
  check("reshape", [m, n](Graph&, V v) { return ad::reshape(v[0], {n, m}); }, {random_tensor(rng, {m, n})});
  check("softmax0", [](Graph&, V v) { return ad::softmax(v[0], 0); }, {random_tensor(rng, {m, n}, -3, 3)});
  check("softmax1", [](Graph&, V v) { return ad::softmax(v[0], 1); }, {random_tensor(rng, {m, n}, -3, 3)});
  check("layer_norm", [](Graph&, V v) { return ad::layer_norm(v[0], v[1], v[2], 1e-5); },
        {random_tensor(rng, {m, n + 2}, -2, 2), random_tensor(rng, {n + 2}), random_tensor(rng, {n + 2})});
  check("gelu", [](Graph&, V v) { return ad::gelu(v[0]); }, {random_tensor(rng, {m, n}, -3, 3)});
  check("sigmoid", [](Graph&, V v) { return ad::sigmoid(v[0]); }, {random_tensor(rng, {m, n}, -4, 4)});
  check("tanh", [](Graph&, V v) { return ad::tanh(v[0]); }, {random_tensor(rng, {m, n}, -2, 2)});
  check("abs", [](Graph&, V v) { return ad::abs(v[0]); }, {random_tensor(rng, {m, n})});
  check("sum", [](Graph&, V v) { return ad::sum(v[0]); }, {random_tensor(rng, {m, n})});
  check("mean", [](Graph&, V v) { return ad::mean(v[0]); }, {random_tensor(rng, {m, n})});
  check("min", [](Graph&, V v) { return ad::min(v[0]); }, {random_tensor(rng, {m * n})});
  check("slice_rows", [](Graph&, V v) { return ad::slice_rows(v[0], 1, 2); }, {random_tensor(rng, {m + 2, n})});
  check("slice_cols", [](Graph&, V v) { return ad::slice_cols(v[0], 1, 2); }, {random_tensor(rng, {m, n + 2})});
  check("concat_rows", [](Graph&, V v) { return ad::concat_rows(v); },
        {random_tensor(rng, {m, n}), random_tensor(rng, {n}), random_tensor(rng, {k, n})});
  check("concat_cols", [](Graph&, V v) { return ad::concat_cols(v); },
        {random_tensor(rng, {m, n}), random_tensor(rng, {m, k})});
  check("stack", [](Graph&, V v) { return ad::stack(v); },
        {random_tensor(rng, {1}), random_tensor(rng, {}), random_tensor(rng, {1, 1})});
  check("composite",
        [](Graph&, V v) {
          Var h = ad::gelu(ad::add_bias(ad::matmul(v[0], v[1]), v[2]));
          return ad::softmax(ad::layer_norm(h, v[3], v[2], 1e-5), 1);
        },
        {random_tensor(rng, {m, k}), random_tensor(rng, {k, n + 2}), random_tensor(rng, {n + 2}),
         random_tensor(rng, {n + 2})});
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 100));

TEST(Min, TiesGoToEarliestIndex) {
  Graph g;
  Var x = g.variable(Tensor::vector({2, 1, 1, 3}));
  g.backward(ad::min(x));
  EXPECT_EQ(g.grad(x), Tensor::vector({0, 1, 0, 0}));
}
