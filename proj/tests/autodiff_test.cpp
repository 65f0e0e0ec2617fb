// Copyright 2026 The dinet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "din/autodiff.hpp"
#include "din/gradcheck.hpp"
#include "oracles.hpp"

using namespace din;

namespace {

// Scalar probe <y, r> with fixed random r, so every output coordinate feeds
// the checked gradient.
Var<double> probe(Var<double> y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = y.value().size();
  Var<double> r = y.tape().constant(oracle::random_tensor(Shape{1, n}, rng));
  return sum(matmul_nt(reshape(y, Shape{1, n}), r));
}

Tensor<double> draw(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(s, rng);
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autodiff, MatmulGradients) {
  const Tensor<double> b = draw(Shape{4, 5}, 1);
  auto f = [&](Tape<double>& t, Var<double> x) { return probe(matmul(x, t.constant(b)), 2); };
  EXPECT_LT(finite_diff_check(f, draw(Shape{3, 4}, 3)).max_rel_error, kTol);
  const Tensor<double> a = draw(Shape{3, 4}, 4);
  auto g = [&](Tape<double>& t, Var<double> x) { return probe(matmul(t.constant(a), x), 5); };
  EXPECT_LT(finite_diff_check(g, draw(Shape{4, 5}, 6)).max_rel_error, kTol);
}

TEST(Autodiff, MatmulNtAndAffine) {
  const Tensor<double> w = draw(Shape{6, 4}, 7), bias = draw(Shape{6}, 8);
  auto f = [&](Tape<double>& t, Var<double> x) { return probe(affine_nt(x, t.constant(w), t.constant(bias)), 9); };
  EXPECT_LT(finite_diff_check(f, draw(Shape{3, 4}, 10)).max_rel_error, kTol);
  const Tensor<double> x0 = draw(Shape{3, 4}, 11);
  auto g = [&](Tape<double>& t, Var<double> w) { return probe(matmul_nt(t.constant(x0), w), 12); };
  EXPECT_LT(finite_diff_check(g, w).max_rel_error, kTol);
  auto h = [&](Tape<double>& t, Var<double> b) {
    return probe(affine_nt(t.constant(x0), t.constant(w), b), 13);
  };
  EXPECT_LT(finite_diff_check(h, bias).max_rel_error, kTol);
}

TEST(Autodiff, SoftmaxRowsSumToOneAndGradient) {
  Tape<double> tape;
  Var<double> s = softmax_axis(tape.constant(draw(Shape{3, 5, 4}, 14)), 1);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t c = 0; c < 4; ++c) {
      double total = 0;
      for (std::size_t b = 0; b < 5; ++b) total += s.value().at(a, b, c);
      EXPECT_NEAR(total, 1.0, 1e-15);
    }
  }
  for (std::size_t axis : {0u, 1u, 2u}) {
    auto f = [&](Tape<double>&, Var<double> x) { return probe(softmax_axis(x, axis), 15 + axis); };
    EXPECT_LT(finite_diff_check(f, draw(Shape{3, 5, 4}, 18)).max_rel_error, kTol);
  }
}

TEST(Autodiff, SoftmaxIsShiftInvariantAndStable) {
  Tape<double> tape;
  Var<double> a = softmax_axis(tape.constant(Tensor<double>(Shape{3}, {1000.0, 1001.0, 1002.0})), 0);
  Var<double> b = softmax_axis(tape.constant(Tensor<double>(Shape{3}, {0.0, 1.0, 2.0})), 0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.value()[i], b.value()[i], 1e-15);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>(Shape{4}, {-1.0, 0.0, 2.0, 0.0}).set_requires_grad(true));
  Var<double> y = sum(relu(x));
  tape.backward(y);
  const Tensor<double> g = tape.grad(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 1.0);
  EXPECT_EQ(g[3], 0.0);
  EXPECT_EQ(tape.smooth_margin(), 0.0);
}

TEST(Autodiff, MaxTieSendsGradientToFirstArgmax) {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>(Shape{2, 3}, {1.0, 5.0, 5.0, 2.0, 0.0, 1.0}).set_requires_grad(true));
  Var<double> y = sum(reduce_max_axis(x, 1));
  EXPECT_EQ(y.value()[0], 7.0);
  tape.backward(y);
  const Tensor<double> g = tape.grad(x);
  EXPECT_EQ(g, Tensor<double>(Shape{2, 3}, {0.0, 1.0, 0.0, 1.0, 0.0, 0.0}));
}

TEST(Autodiff, MaskedMaxSkipsAbsentEntries) {
  Tape<double> tape;
  Var<double> x = tape.constant(Tensor<double>(Shape{2, 3}, {9.0, 1.0, 2.0, 4.0, 4.0, 4.0}));
  const std::uint8_t mask[] = {0, 1, 1, 0, 0, 0};
  Var<double> y = reduce_max_axis(x, 1, mask);
  EXPECT_EQ(y.value()[0], 2.0);
  EXPECT_EQ(y.value()[1], 0.0);
}

TEST(Autodiff, ReductionsAndElementwiseGradients) {
  auto mean = [](Tape<double>&, Var<double> x) { return probe(reduce_mean_axis(x, 1), 20); };
  EXPECT_LT(finite_diff_check(mean, draw(Shape{3, 4, 2}, 21)).max_rel_error, kTol);
  auto mx = [](Tape<double>&, Var<double> x) { return probe(reduce_max_axis(x, 0), 22); };
  EXPECT_LT(finite_diff_check(mx, draw(Shape{5, 3}, 23)).max_rel_error, kTol);
  const Tensor<double> other = draw(Shape{2, 3}, 24);
  auto el = [&](Tape<double>& t, Var<double> x) {
    return probe(relu(scale(add(x, t.constant(other)), 1.5)), 25);
  };
  EXPECT_LT(finite_diff_check(el, draw(Shape{2, 3}, 26)).max_rel_error, kTol);
}

TEST(Autodiff, CrossEntropyWorkedExample) {
  Tape<double> tape;
  Var<double> logits = tape.leaf(Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}).set_requires_grad(true));
  Var<double> loss = cross_entropy(logits, 2);
  const double expected = std::log(1 + std::exp(-1.0) + std::exp(-2.0));
  EXPECT_NEAR(loss.value()[0], expected, 1e-15);
  tape.backward(loss);
  const Tensor<double> g = tape.grad(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(g[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(g[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(g[2], std::exp(3.0) / z - 1, 1e-15);
  EXPECT_THROW(cross_entropy(logits, 3), std::out_of_range);
}

TEST(Autodiff, GridConvMatchesLoopOracle) {
  std::mt19937_64 rng(27);
  std::uniform_int_distribution<std::size_t> ext(1, 6), ch(1, 5), half(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = ext(rng), N = ext(rng), Cin = ch(rng), Cout = ch(rng);
    const std::size_t kT = 2 * half(rng) + 1, kN = 2 * half(rng) + 1;
    const Tensor<double> grid = oracle::random_tensor(Shape{T, N, Cin}, rng);
    const Tensor<double> kernel = oracle::random_tensor(Shape{Cout, kT, kN, Cin}, rng);
    const Tensor<double> bias = oracle::random_tensor(Shape{Cout}, rng);
    Tape<double> tape;
    Var<double> y = grid_conv(tape.constant(grid), tape.constant(kernel), tape.constant(bias));
    EXPECT_LT(oracle::max_abs_diff(y.value(), oracle::conv(grid, kernel, bias)), 1e-12) << "trial " << trial;
  }
}

TEST(Autodiff, GridConvGradients) {
  const Tensor<double> grid = draw(Shape{4, 3, 2}, 28), kernel = draw(Shape{3, 3, 3, 2}, 29),
                       bias = draw(Shape{3}, 30);
  auto fg = [&](Tape<double>& t, Var<double> x) {
    return probe(grid_conv(x, t.constant(kernel), t.constant(bias)), 31);
  };
  EXPECT_LT(finite_diff_check(fg, grid).max_rel_error, kTol);
  auto fk = [&](Tape<double>& t, Var<double> k) {
    return probe(grid_conv(t.constant(grid), k, t.constant(bias)), 32);
  };
  EXPECT_LT(finite_diff_check(fk, kernel).max_rel_error, kTol);
  auto fb = [&](Tape<double>& t, Var<double> b) {
    return probe(grid_conv(t.constant(grid), t.constant(kernel), b), 33);
  };
  EXPECT_LT(finite_diff_check(fb, bias).max_rel_error, kTol);
}

TEST(Autodiff, FieldStackMatchesOracle) {
  const Tensor<double> grid = draw(Shape{3, 4, 2}, 34);
  Tape<double> tape;
  Var<double> s = field_stack(tape.constant(grid), 3, 3);
  ASSERT_EQ(s.shape(), (Shape{3, 4, 9, 2}));
  for (long t = 0; t < 3; ++t) {
    for (long n = 0; n < 4; ++n) {
      const std::vector<double> u = oracle::field(grid, t, n, 3, 3);
      for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(s.value()[(t * 4 + n) * 18 + i], u[i]);
    }
  }
  auto f = [](Tape<double>&, Var<double> x) { return probe(field_stack(x, 1, 3), 35); };
  EXPECT_LT(finite_diff_check(f, grid).max_rel_error, kTol);
}

TEST(Autodiff, BackwardRequiresScalarLoss) {
  Tape<double> tape;
  Var<double> x = tape.leaf(draw(Shape{2}, 36).set_requires_grad(true));
  EXPECT_THROW(tape.backward(relu(x)), std::invalid_argument);
}

TEST(Autodiff, DisconnectedLeafGetsZeroGradient) {
  Tape<double> tape;
  Var<double> x = tape.leaf(draw(Shape{2}, 37).set_requires_grad(true));
  Var<double> z = tape.leaf(draw(Shape{3}, 38).set_requires_grad(true));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(z), Tensor<double>(Shape{3}));
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
  Tape<double> tape;
  Var<double> x = tape.leaf(Tensor<double>(Shape{2}, {1.0, 2.0}).set_requires_grad(true));
  tape.backward(sum(add(x, scale(x, 2.0))));
  EXPECT_EQ(tape.grad(x), Tensor<double>(Shape{2}, {3.0, 3.0}));
}

TEST(Autodiff, BackwardIsDeterministic) {
  const Tensor<double> grid = draw(Shape{5, 4, 3}, 39), kernel = draw(Shape{4, 3, 3, 3}, 40);
  auto run = [&] {
    Tape<double> tape;
    Var<double> k = tape.leaf(Tensor<double>(kernel).set_requires_grad(true));
    Var<double> y = probe(softmax_axis(grid_conv(tape.constant(grid), k, tape.constant(Tensor<double>(Shape{4}))), 2), 41);
    tape.backward(y);
    return tape.grad(k);
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, MacTallies) {
  Tape<double> tape;
  Var<double> a = tape.constant(draw(Shape{3, 4}, 42));
  matmul(a, tape.constant(draw(Shape{4, 5}, 43)));
  EXPECT_EQ(tape.macs().dense, 60u);
  matmul_nt(a, tape.constant(draw(Shape{6, 4}, 44)), MacKind::Head);
  EXPECT_EQ(tape.macs().head, 72u);
  grid_conv(tape.constant(draw(Shape{2, 3, 4}, 45)), tape.constant(draw(Shape{5, 3, 3, 4}, 46)),
            tape.constant(draw(Shape{5}, 47)));
  // Every position pays for the full kernel, padding included.
  EXPECT_EQ(tape.macs().dense, 60u + 2 * 3 * 5 * 9 * 4);
  EXPECT_EQ(tape.macs().total(), tape.macs().dense + tape.macs().head + tape.macs().aggregation);
}

TEST(Autodiff, ShapeMismatchesThrow) {
  Tape<double> tape;
  EXPECT_THROW(matmul(tape.constant(draw(Shape{2, 3}, 48)), tape.constant(draw(Shape{2, 3}, 49))), ShapeError);
  EXPECT_THROW(add(tape.constant(draw(Shape{2}, 50)), tape.constant(draw(Shape{3}, 51))), ShapeError);
}

TEST(GradCheck, DetectsCorrectAndWrongGradients) {
  auto f = [](std::span<const double> x) { return x[0] * x[0] + 3 * x[1]; };
  const double point[] = {2.0, -1.0};
  const double good[] = {4.0, 3.0};
  const double bad[] = {4.0, 3.5};
  EXPECT_LT(finite_diff_check(f, point, good).max_rel_error, 1e-9);
  const FdResult r = finite_diff_check(f, point, bad);
  EXPECT_NEAR(r.max_rel_error, 0.5 / 3.0, 1e-6);
  EXPECT_EQ(r.worst, 1u);
  EXPECT_EQ(r.checked, 2u);
}
