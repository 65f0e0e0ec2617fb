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

#include "din/st_graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "din/kernels.hpp"

namespace din {

FieldSpec::FieldSpec(std::size_t kT, std::size_t kN) : kT_(kT), kN_(kN) {
  if (kT == 0 || kN == 0 || kT % 2 == 0 || kN % 2 == 0) {
    throw std::invalid_argument("interaction field extents must be odd and positive, got " +
                                std::to_string(kT) + "x" + std::to_string(kN));
  }
}

FieldSpec FieldSpec::parse(std::string_view text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos) {
    throw std::invalid_argument("field must be written as kTxkN, got '" + std::string(text) + "'");
  }
  auto parse_extent = [&](std::string_view part) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw std::invalid_argument("field must be written as kTxkN, got '" + std::string(text) + "'");
    }
    return v;
  };
  return FieldSpec(parse_extent(text.substr(0, x)), parse_extent(text.substr(x + 1)));
}

std::string FieldSpec::to_string() const { return std::to_string(kT_) + "x" + std::to_string(kN_); }

template <typename S>
FeatureGrid<S>::FeatureGrid(Tensor<S> data) : data_(std::move(data)) {
  if (data_.rank() != 3) {
    throw ShapeError("feature grid must be T x N x D, got " + din::to_string(data_.shape()));
  }
}

template <typename S>
Coord<S> clamp_coord(Coord<S> c, std::size_t T, std::size_t N) {
  return {std::clamp(c.t, S{0}, static_cast<S>(T - 1)), std::clamp(c.n, S{0}, static_cast<S>(N - 1))};
}

template <typename S>
Tensor<S> extract_field(const FeatureGrid<S>& grid, std::size_t t, std::size_t n, const FieldSpec& field) {
  if (t >= grid.T() || n >= grid.N()) throw std::out_of_range("field centre outside the grid");
  const std::size_t K = field.size(), D = grid.D();
  Tensor<S> u(Shape{K, D});
  for (std::size_t k = 0; k < K; ++k) {
    const auto [dt, dn] = field.offset(k);
    const long st = static_cast<long>(t) + dt;
    const long sn = static_cast<long>(n) + dn;
    if (st < 0 || sn < 0 || st >= static_cast<long>(grid.T()) || sn >= static_cast<long>(grid.N())) {
      continue;
    }
    const S* src = grid.at(static_cast<std::size_t>(st), static_cast<std::size_t>(sn));
    std::copy(src, src + D, u.data() + k * D);
  }
  return u;
}

namespace {

// Lower cell and fractional weight of a clamped coordinate along one axis.
template <typename S>
struct Axis {
  std::size_t lo;
  S frac;
  bool has_hi;
};

template <typename S>
Axis<S> split(S c, std::size_t extent) {
  const S f = std::floor(c);
  std::size_t lo = static_cast<std::size_t>(f);
  if (lo > extent - 1) lo = extent - 1;
  return {lo, c - static_cast<S>(lo), lo + 1 < extent};
}

}  // namespace

template <typename S>
Tensor<S> bilinear_sample(const FeatureGrid<S>& grid, Coord<S> c) {
  const std::size_t D = grid.D();
  Tensor<S> y(Shape{D});
  const Axis<S> at = split(c.t, grid.T());
  const Axis<S> an = split(c.n, grid.N());
  const S wt[2] = {S{1} - at.frac, at.frac};
  const S wn[2] = {S{1} - an.frac, an.frac};
  for (int a = 0; a < 2; ++a) {
    if (a == 1 && !at.has_hi) break;
    for (int b = 0; b < 2; ++b) {
      if (b == 1 && !an.has_hi) break;
      const S w = wt[a] * wn[b];
      if (w == S{0}) continue;
      kernels::axpy(w, grid.at(at.lo + a, an.lo + b), y.data(), D);
    }
  }
  return y;
}

template <typename S>
Coord<S> walked_coord(std::size_t t, std::size_t n, std::size_t k, const FieldSpec& field, S dt, S dn,
                      std::size_t T, std::size_t N) {
  const auto [mt, mn] = field.offset(k);
  Coord<S> raw{static_cast<S>(static_cast<long>(t) + mt) + dt, static_cast<S>(static_cast<long>(n) + mn) + dn};
  return clamp_coord(raw, T, N);
}

namespace {

// Distance from a raw coordinate to the nearest point where the clamped
// bilinear sampler is not differentiable.
template <typename S>
double kink_distance(S raw, std::size_t extent) {
  const double r = static_cast<double>(raw);
  const double hi = static_cast<double>(extent - 1);
  if (r < 0) return -r;
  if (r > hi) return r - hi;
  return std::abs(r - std::round(r));
}

}  // namespace

template <typename S>
Var<S> walk_sample(Var<S> grid, Var<S> offsets, const FieldSpec& field) {
  const Tensor<S>& G = grid.value();
  const Tensor<S>& P = offsets.value();
  if (G.rank() != 3) throw ShapeError("walk_sample: grid must be T x N x D, got " + to_string(G.shape()));
  const std::size_t T = G.dim(0), N = G.dim(1), D = G.dim(2), K = field.size();
  if (P.shape() != Shape{T, N, K, 2}) {
    throw ShapeError("walk_sample: offsets must be " + to_string(Shape{T, N, K, 2}) + ", got " +
                     to_string(P.shape()));
  }
  const FeatureGrid<S> fg(G);
  Tensor<S> Y(Shape{T, N, K, D});
  double margin = std::numeric_limits<double>::infinity();
  std::uint64_t macs = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t pk = (t * N + n) * K + k;
        const auto [mt, mn] = field.offset(k);
        const S raw_t = static_cast<S>(static_cast<long>(t) + mt) + P[pk * 2];
        const S raw_n = static_cast<S>(static_cast<long>(n) + mn) + P[pk * 2 + 1];
        margin = std::min({margin, kink_distance(raw_t, T), kink_distance(raw_n, N)});
        const Coord<S> c = clamp_coord(Coord<S>{raw_t, raw_n}, T, N);
        const Axis<S> at = split(c.t, T);
        const Axis<S> an = split(c.n, N);
        const S wt[2] = {S{1} - at.frac, at.frac};
        const S wn[2] = {S{1} - an.frac, an.frac};
        S* y = Y.data() + pk * D;
        for (int a = 0; a < 2; ++a) {
          if (a == 1 && !at.has_hi) break;
          for (int b = 0; b < 2; ++b) {
            if (b == 1 && !an.has_hi) break;
            const S w = wt[a] * wn[b];
            if (w == S{0}) continue;
            kernels::axpy(w, fg.at(at.lo + a, an.lo + b), y, D);
            macs += D;
          }
        }
      }
    }
  }
  Tape<S>& tape = grid.tape();
  tape.note_margin(margin);
  tape.count(MacKind::Aggregation, macs);
  const std::size_t ig = grid.id(), ip = offsets.id();
  return tape.record(std::move(Y), {grid, offsets}, [=](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    const Tensor<S>& G = tp.value(ig);
    const Tensor<S>& P = tp.value(ip);
    const bool want_grid = tp.requires_grad(ig);
    const bool want_off = tp.requires_grad(ip);
    Tensor<S>* dG = want_grid ? &tp.grad_buffer(ig) : nullptr;
    Tensor<S>* dP = want_off ? &tp.grad_buffer(ip) : nullptr;
    auto cell = [&](std::size_t ct, std::size_t cn) { return G.data() + (ct * N + cn) * D; };
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t pk = (t * N + n) * K + k;
          const auto [mt, mn] = field.offset(k);
          const S raw_t = static_cast<S>(static_cast<long>(t) + mt) + P[pk * 2];
          const S raw_n = static_cast<S>(static_cast<long>(n) + mn) + P[pk * 2 + 1];
          const Coord<S> c = clamp_coord(Coord<S>{raw_t, raw_n}, T, N);
          const Axis<S> at = split(c.t, T);
          const Axis<S> an = split(c.n, N);
          const S wt[2] = {S{1} - at.frac, at.frac};
          const S wn[2] = {S{1} - an.frac, an.frac};
          const S* g = dY.data() + pk * D;
          if (dG) {
            for (int a = 0; a < 2; ++a) {
              if (a == 1 && !at.has_hi) break;
              for (int b = 0; b < 2; ++b) {
                if (b == 1 && !an.has_hi) break;
                const S w = wt[a] * wn[b];
                if (w == S{0}) continue;
                kernels::axpy(w, g, dG->data() + ((at.lo + a) * N + an.lo + b) * D, D);
              }
            }
          }
          if (dP) {
            // Projections of the upstream gradient onto the (up to) four cells.
            S q[2][2] = {{0, 0}, {0, 0}};
            for (int a = 0; a < 2; ++a) {
              if (a == 1 && !at.has_hi) break;
              for (int b = 0; b < 2; ++b) {
                if (b == 1 && !an.has_hi) break;
                q[a][b] = kernels::dot(g, cell(at.lo + a, an.lo + b), D);
              }
            }
            const bool free_t = raw_t >= S{0} && raw_t <= static_cast<S>(T - 1);
            const bool free_n = raw_n >= S{0} && raw_n <= static_cast<S>(N - 1);
            if (free_t) (*dP)[pk * 2] += wn[0] * (q[1][0] - q[0][0]) + wn[1] * (q[1][1] - q[0][1]);
            if (free_n) (*dP)[pk * 2 + 1] += wt[0] * (q[0][1] - q[0][0]) + wt[1] * (q[1][1] - q[1][0]);
          }
        }
      }
    }
  });
}

template <typename S>
Var<S> field_aggregate(Var<S> weights, Var<S> members) {
  const Tensor<S>& W = weights.value();
  const Tensor<S>& M = members.value();
  if (M.rank() != 4 || W.shape() != Shape{M.dim(0), M.dim(1), M.dim(2)}) {
    throw ShapeError("field_aggregate: weights " + to_string(W.shape()) + " do not match members " +
                     to_string(M.shape()));
  }
  const std::size_t T = M.dim(0), N = M.dim(1), K = M.dim(2), D = M.dim(3);
  Tensor<S> out(Shape{T, N, D});
  for (std::size_t p = 0; p < T * N; ++p) {
    for (std::size_t k = 0; k < K; ++k) {
      kernels::axpy(W[p * K + k], M.data() + (p * K + k) * D, out.data() + p * D, D);
    }
  }
  Tape<S>& tape = weights.tape();
  tape.count(MacKind::Aggregation, static_cast<std::uint64_t>(T) * N * K * D);
  const std::size_t iw = weights.id(), im = members.id();
  return tape.record(std::move(out), {weights, members}, [=](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dO = tp.grad_of(self);
    const Tensor<S>& W = tp.value(iw);
    const Tensor<S>& M = tp.value(im);
    if (tp.requires_grad(iw)) {
      Tensor<S>& dW = tp.grad_buffer(iw);
      for (std::size_t p = 0; p < T * N; ++p) {
        for (std::size_t k = 0; k < K; ++k) {
          dW[p * K + k] += kernels::dot(dO.data() + p * D, M.data() + (p * K + k) * D, D);
        }
      }
    }
    if (tp.requires_grad(im)) {
      Tensor<S>& dM = tp.grad_buffer(im);
      for (std::size_t p = 0; p < T * N; ++p) {
        for (std::size_t k = 0; k < K; ++k) {
          kernels::axpy(W[p * K + k], dO.data() + p * D, dM.data() + (p * K + k) * D, D);
        }
      }
    }
  });
}

template <typename S>
Var<S> field_dot(Var<S> query, Var<S> members) {
  const Tensor<S>& Q = query.value();
  const Tensor<S>& M = members.value();
  if (M.rank() != 4 || Q.shape() != Shape{M.dim(0), M.dim(1), M.dim(3)}) {
    throw ShapeError("field_dot: query " + to_string(Q.shape()) + " does not match members " +
                     to_string(M.shape()));
  }
  const std::size_t T = M.dim(0), N = M.dim(1), K = M.dim(2), D = M.dim(3);
  Tensor<S> out(Shape{T, N, K});
  for (std::size_t p = 0; p < T * N; ++p) {
    for (std::size_t k = 0; k < K; ++k) {
      out[p * K + k] = kernels::dot(Q.data() + p * D, M.data() + (p * K + k) * D, D);
    }
  }
  Tape<S>& tape = query.tape();
  tape.count(MacKind::Aggregation, static_cast<std::uint64_t>(T) * N * K * D);
  const std::size_t iq = query.id(), im = members.id();
  return tape.record(std::move(out), {query, members}, [=](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dO = tp.grad_of(self);
    const Tensor<S>& Q = tp.value(iq);
    const Tensor<S>& M = tp.value(im);
    if (tp.requires_grad(iq)) {
      Tensor<S>& dQ = tp.grad_buffer(iq);
      for (std::size_t p = 0; p < T * N; ++p) {
        for (std::size_t k = 0; k < K; ++k) {
          kernels::axpy(dO[p * K + k], M.data() + (p * K + k) * D, dQ.data() + p * D, D);
        }
      }
    }
    if (tp.requires_grad(im)) {
      Tensor<S>& dM = tp.grad_buffer(im);
      for (std::size_t p = 0; p < T * N; ++p) {
        for (std::size_t k = 0; k < K; ++k) {
          kernels::axpy(dO[p * K + k], Q.data() + p * D, dM.data() + (p * K + k) * D, D);
        }
      }
    }
  });
}

#define DIN_INSTANTIATE(S)                                                                           \
  template class FeatureGrid<S>;                                                                     \
  template Coord<S> clamp_coord<S>(Coord<S>, std::size_t, std::size_t);                              \
  template Tensor<S> extract_field<S>(const FeatureGrid<S>&, std::size_t, std::size_t, const FieldSpec&); \
  template Tensor<S> bilinear_sample<S>(const FeatureGrid<S>&, Coord<S>);                            \
  template Coord<S> walked_coord<S>(std::size_t, std::size_t, std::size_t, const FieldSpec&, S, S,   \
                                    std::size_t, std::size_t);                                       \
  template Var<S> walk_sample<S>(Var<S>, Var<S>, const FieldSpec&);                                  \
  template Var<S> field_aggregate<S>(Var<S>, Var<S>);                                                \
  template Var<S> field_dot<S>(Var<S>, Var<S>);

DIN_INSTANTIATE(float)
DIN_INSTANTIATE(double)
DIN_INSTANTIATE(long double)

#undef DIN_INSTANTIATE

}  // namespace din
