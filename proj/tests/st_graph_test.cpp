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

#include <random>

#include "din/gradcheck.hpp"
#include "din/st_graph.hpp"
#include "oracles.hpp"

using namespace din;

namespace {

Var<double> probe(Var<double> y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = y.value().size();
  Var<double> r = y.tape().constant(oracle::random_tensor(Shape{1, n}, rng));
  return sum(matmul_nt(reshape(y, Shape{1, n}), r));
}

Tensor<double> draw(const Shape& s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(s, rng, lo, hi);
}

}  // namespace

TEST(FieldSpec, ParseAndGeometry) {
  const FieldSpec f = FieldSpec::parse("3x3");
  EXPECT_EQ(f.size(), 9u);
  EXPECT_EQ(f.offset(0), (std::pair<long, long>{-1, -1}));
  EXPECT_EQ(f.offset(4), (std::pair<long, long>{0, 0}));
  EXPECT_EQ(f.offset(5), (std::pair<long, long>{0, 1}));
  const FieldSpec g = FieldSpec::parse("1x9");
  EXPECT_EQ(g.kT(), 1u);
  EXPECT_EQ(g.kN(), 9u);
  EXPECT_EQ(g.offset(0), (std::pair<long, long>{0, -4}));
  EXPECT_EQ(g.to_string(), "1x9");
  for (const char* bad : {"2x3", "3x", "x3", "3*3", "", "0x1", "3x3x3", "-1x3"}) {
    EXPECT_THROW(FieldSpec::parse(bad), std::invalid_argument) << bad;
  }
  EXPECT_THROW(FieldSpec(4, 3), std::invalid_argument);
}

TEST(FieldSpec, CornerFieldIsZeroPadded) {
  FeatureGrid<double> grid(draw(Shape{4, 5, 3}, 1, 0.5, 1.0));
  const FieldSpec f(3, 3);
  auto zero_members = [&](std::size_t t, std::size_t n) {
    const Tensor<double> u = extract_field(grid, t, n, f);
    std::size_t zeros = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      bool all_zero = true;
      for (std::size_t d = 0; d < 3; ++d) all_zero = all_zero && u.at(k, d) == 0.0;
      zeros += all_zero;
    }
    return zeros;
  };
  EXPECT_EQ(zero_members(0, 0), 5u);
  EXPECT_EQ(zero_members(3, 4), 5u);
  EXPECT_EQ(zero_members(0, 2), 3u);
  EXPECT_EQ(zero_members(2, 2), 0u);
  const Tensor<double> u = extract_field(grid, 0, 0, f);
  EXPECT_EQ(u.at(4, 1), grid.at(0, 0)[1]);
  EXPECT_EQ(u.at(8, 2), grid.at(1, 1)[2]);
  EXPECT_THROW(extract_field(grid, 4, 0, f), std::out_of_range);
}

TEST(Bilinear, MatchesDoubleSumOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> ext(1, 7), dim(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = ext(rng), N = ext(rng), D = dim(rng);
    const Tensor<double> data = oracle::random_tensor(Shape{T, N, D}, rng);
    FeatureGrid<double> grid(data);
    std::uniform_real_distribution<double> ct(-2.0, static_cast<double>(T) + 1), cn(-2.0, static_cast<double>(N) + 1);
    Coord<double> c{ct(rng), cn(rng)};
    if (trial % 10 == 0) c = {std::floor(c.t), std::floor(c.n)};  // lattice points too
    const Tensor<double> y = bilinear_sample(grid, clamp_coord(c, T, N));
    const std::vector<double> ref = oracle::bilinear(data, c.t, c.n);
    for (std::size_t d = 0; d < D; ++d) EXPECT_NEAR(y[d], ref[d], 1e-12) << "trial " << trial;
  }
}

TEST(Bilinear, LatticePointReturnsCell) {
  FeatureGrid<double> grid(draw(Shape{3, 4, 2}, 3));
  const Tensor<double> y = bilinear_sample(grid, Coord<double>{2.0, 3.0});
  EXPECT_EQ(y[0], grid.at(2, 3)[0]);
  EXPECT_EQ(y[1], grid.at(2, 3)[1]);
}

TEST(Walk, SampleMatchesOracleOverRandomOffsets) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ext(1, 5), dim(1, 4), half(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = ext(rng), N = ext(rng), D = dim(rng);
    const FieldSpec f(2 * half(rng) + 1, 2 * half(rng) + 1);
    const std::size_t K = f.size();
    const Tensor<double> grid = oracle::random_tensor(Shape{T, N, D}, rng);
    const Tensor<double> off = oracle::random_tensor(Shape{T, N, K, 2}, rng, -3, 3);
    Tape<double> tape;
    Var<double> y = walk_sample(tape.constant(grid), tape.constant(off), f);
    ASSERT_EQ(y.shape(), (Shape{T, N, K, D}));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
          const auto [mt, mn] = f.offset(k);
          const double wt = static_cast<double>(static_cast<long>(t) + mt) + off.at(t, n, k, 0);
          const double wn = static_cast<double>(static_cast<long>(n) + mn) + off.at(t, n, k, 1);
          const std::vector<double> ref = oracle::bilinear(grid, wt, wn);
          for (std::size_t d = 0; d < D; ++d) EXPECT_NEAR(y.value().at(t, n, k, d), ref[d], 1e-12);
        }
      }
    }
  }
}

TEST(Walk, ZeroOffsetsReproduceFieldOnInteriorPositions) {
  const Tensor<double> grid = draw(Shape{5, 6, 3}, 5);
  const FieldSpec f(3, 3);
  Tape<double> tape;
  Var<double> g = tape.constant(grid);
  Var<double> walked = walk_sample(g, tape.constant(Tensor<double>(Shape{5, 6, 9, 2})), f);
  Var<double> stacked = stack_field(g, f);
  for (std::size_t t = 1; t + 1 < 5; ++t) {
    for (std::size_t n = 1; n + 1 < 6; ++n) {
      for (std::size_t i = 0; i < 9 * 3; ++i) {
        const std::size_t p = (t * 6 + n) * 27 + i;
        EXPECT_EQ(walked.value()[p], stacked.value()[p]);
      }
    }
  }
  // At a corner the out-of-grid members are clamped onto edge cells.
  EXPECT_EQ(walked.value().at(0, 0, 0, 0), grid.at(0, 0, 0));
  EXPECT_EQ(stacked.value().at(0, 0, 0, 0), 0.0);
}

TEST(Walk, GradientsThroughGridAndOffsets) {
  const FieldSpec f(3, 3);
  // Offsets well inside (0.2, 0.8) mod 1 so no coordinate sits on a kink, and
  // small enough that only border members get clamped.
  Tensor<double> off = draw(Shape{3, 4, 9, 2}, 6, 0.2, 0.8);
  const Tensor<double> grid = draw(Shape{3, 4, 2}, 7);
  auto fo = [&](Tape<double>& t, Var<double> o) { return probe(walk_sample(t.constant(grid), o, f), 8); };
  EXPECT_LT(finite_diff_check(fo, off).max_rel_error, 1e-6);
  auto fg = [&](Tape<double>& t, Var<double> g) { return probe(walk_sample(g, t.constant(off), f), 9); };
  EXPECT_LT(finite_diff_check(fg, grid).max_rel_error, 1e-6);
}

TEST(Walk, ClampedAxisGetsNoOffsetGradient) {
  const FieldSpec f(1, 1);
  const Tensor<double> grid = draw(Shape{3, 3, 2}, 10);
  // dt pushes far outside, dn stays strictly inside.
  Tensor<double> off(Shape{3, 3, 1, 2});
  for (std::size_t i = 0; i < 9; ++i) {
    off[2 * i] = 5.3;
    off[2 * i + 1] = i % 3 == 2 ? -0.4 : 0.4;
  }
  Tape<double> tape;
  Var<double> o = tape.leaf(Tensor<double>(off).set_requires_grad(true));
  tape.backward(probe(walk_sample(tape.constant(grid), o, f), 11));
  const Tensor<double> g = tape.grad(o);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(g[2 * i], 0.0);
    EXPECT_NE(g[2 * i + 1], 0.0);
  }
}

TEST(Walk, WalkedCoordClampsOnce) {
  const FieldSpec f(3, 3);
  const Coord<double> c = walked_coord<double>(0, 0, 0, f, -0.5, 0.25, 4, 5);
  EXPECT_EQ(c.t, 0.0);
  EXPECT_EQ(c.n, 0.0);
  const Coord<double> d = walked_coord<double>(2, 2, 8, f, 0.25, -0.5, 4, 5);
  EXPECT_EQ(d.t, 3.0);
  EXPECT_EQ(d.n, 2.5);
}

TEST(Field, AggregateAndDot) {
  const Tensor<double> w = draw(Shape{2, 3, 4}, 12), m = draw(Shape{2, 3, 4, 5}, 13), q = draw(Shape{2, 3, 5}, 14);
  Tape<double> tape;
  Var<double> agg = field_aggregate(tape.constant(w), tape.constant(m));
  Var<double> dot = field_dot(tape.constant(q), tape.constant(m));
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t n = 0; n < 3; ++n) {
      for (std::size_t d = 0; d < 5; ++d) {
        double ref = 0;
        for (std::size_t k = 0; k < 4; ++k) ref += w.at(t, n, k) * m.at(t, n, k, d);
        EXPECT_NEAR(agg.value().at(t, n, d), ref, 1e-14);
      }
      for (std::size_t k = 0; k < 4; ++k) {
        double ref = 0;
        for (std::size_t d = 0; d < 5; ++d) ref += q.at(t, n, d) * m.at(t, n, k, d);
        EXPECT_NEAR(dot.value().at(t, n, k), ref, 1e-14);
      }
    }
  }
  auto fw = [&](Tape<double>& t, Var<double> x) { return probe(field_aggregate(x, t.constant(m)), 15); };
  EXPECT_LT(finite_diff_check(fw, w).max_rel_error, 1e-6);
  auto fm = [&](Tape<double>& t, Var<double> x) { return probe(field_aggregate(t.constant(w), x), 16); };
  EXPECT_LT(finite_diff_check(fm, m).max_rel_error, 1e-6);
  auto fq = [&](Tape<double>& t, Var<double> x) { return probe(field_dot(x, t.constant(m)), 17); };
  EXPECT_LT(finite_diff_check(fq, q).max_rel_error, 1e-6);
  auto fm2 = [&](Tape<double>& t, Var<double> x) { return probe(field_dot(t.constant(q), x), 18); };
  EXPECT_LT(finite_diff_check(fm2, m).max_rel_error, 1e-6);
}
