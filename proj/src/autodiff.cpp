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

#include "din/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "din/kernels.hpp"

namespace din {

template <typename S>
Var<S> Tape<S>::leaf(Tensor<S> value) {
  const bool rg = value.requires_grad();
  nodes_.push_back(Node{std::move(value), Tensor<S>{}, rg, nullptr});
  return Var<S>(this, nodes_.size() - 1);
}

template <typename S>
Var<S> Tape<S>::constant(Tensor<S> value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

template <typename S>
Var<S> Tape<S>::record(Tensor<S> value, std::initializer_list<Var<S>> inputs, Backward backward) {
  bool rg = false;
  for (const Var<S>& in : inputs) {
    if (&in.tape() != this) throw std::invalid_argument("op inputs belong to a different tape");
    rg = rg || nodes_[in.id()].requires_grad;
  }
  value.set_requires_grad(rg);
  nodes_.push_back(Node{std::move(value), Tensor<S>{}, rg, rg ? std::move(backward) : nullptr});
  return Var<S>(this, nodes_.size() - 1);
}

template <typename S>
Tensor<S>& Tape<S>::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<S>(n.value.shape());
  return n.grad;
}

template <typename S>
void Tape<S>::backward(Var<S> loss) {
  if (&loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  const Tensor<S>& lv = value(loss.id());
  if (lv.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + to_string(lv.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] += S{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

template <typename S>
Tensor<S> Tape<S>::grad(Var<S> v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor<S>(n.value.shape());
  return n.grad;
}

template <typename S>
void Tape<S>::count(MacKind kind, std::uint64_t macs) {
  switch (kind) {
    case MacKind::Dense:
      macs_.dense += macs;
      break;
    case MacKind::Head:
      macs_.head += macs;
      break;
    case MacKind::Aggregation:
      macs_.aggregation += macs;
      break;
  }
}

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(s));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw std::out_of_range(std::string(op) + ": axis " + std::to_string(axis) +
                            " out of range for shape " + to_string(s));
  }
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b, MacKind kind) {
  const Tensor<S>& A = a.value();
  const Tensor<S>& B = b.value();
  require_rank(A.shape(), 2, "matmul");
  require_rank(B.shape(), 2, "matmul");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw ShapeError("matmul: inner extents disagree, " + to_string(A.shape()) + " x " +
                     to_string(B.shape()));
  }
  Tensor<S> C(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      kernels::axpy(A[i * k + p], B.data() + p * n, C.data() + i * n, n);
    }
  }
  Tape<S>& tape = a.tape();
  tape.count(kind, static_cast<std::uint64_t>(m) * k * n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(C), {a, b}, [ia, ib, m, k, n](Tape<S>& t, std::size_t self) {
    const Tensor<S>& dC = t.grad_of(self);
    const Tensor<S>& A = t.value(ia);
    const Tensor<S>& B = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor<S>& dA = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          dA[i * k + p] += kernels::dot(dC.data() + i * n, B.data() + p * n, n);
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor<S>& dB = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          kernels::axpy(A[i * k + p], dC.data() + i * n, dB.data() + p * n, n);
        }
      }
    }
  });
}

namespace {

// Y = X W^T (+ bias); shared by matmul_nt and affine_nt.
template <typename S>
Var<S> linear_nt(Var<S> x, Var<S> w, const Var<S>* bias, MacKind kind, const char* op) {
  const Tensor<S>& X = x.value();
  const Tensor<S>& W = w.value();
  require_rank(X.shape(), 2, op);
  require_rank(W.shape(), 2, op);
  const std::size_t m = X.dim(0), k = X.dim(1), n = W.dim(0);
  if (W.dim(1) != k) {
    throw ShapeError(std::string(op) + ": contracted extents disagree, " + to_string(X.shape()) +
                     " x " + to_string(W.shape()) + "^T");
  }
  if (bias && bias->value().size() != n) {
    throw ShapeError(std::string(op) + ": bias shape " + to_string(bias->value().shape()) +
                     " does not match " + std::to_string(n) + " outputs");
  }
  Tensor<S> Y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const S* xi = X.data() + i * k;
    S* yi = Y.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) yi[j] = kernels::dot(xi, W.data() + j * k, k);
    if (bias) {
      const Tensor<S>& B = bias->value();
      for (std::size_t j = 0; j < n; ++j) yi[j] += B[j];
    }
  }
  Tape<S>& tape = x.tape();
  tape.count(kind, static_cast<std::uint64_t>(m) * n * k);
  const std::size_t ix = x.id(), iw = w.id();
  const bool has_bias = bias != nullptr;
  const std::size_t ib = has_bias ? bias->id() : 0;
  auto backward = [ix, iw, ib, has_bias, m, k, n](Tape<S>& t, std::size_t self) {
    const Tensor<S>& dY = t.grad_of(self);
    const Tensor<S>& X = t.value(ix);
    const Tensor<S>& W = t.value(iw);
    if (t.requires_grad(ix)) {
      Tensor<S>& dX = t.grad_buffer(ix);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const S g = dY[i * n + j];
          if (g != S{0}) kernels::axpy(g, W.data() + j * k, dX.data() + i * k, k);
        }
      }
    }
    if (t.requires_grad(iw)) {
      Tensor<S>& dW = t.grad_buffer(iw);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const S g = dY[i * n + j];
          if (g != S{0}) kernels::axpy(g, X.data() + i * k, dW.data() + j * k, k);
        }
      }
    }
    if (has_bias && t.requires_grad(ib)) {
      Tensor<S>& dB = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) dB[j] += dY[i * n + j];
      }
    }
  };
  if (has_bias) return tape.record(std::move(Y), {x, w, *bias}, std::move(backward));
  return tape.record(std::move(Y), {x, w}, std::move(backward));
}

}  // namespace

template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b, MacKind kind) {
  return linear_nt<S>(a, b, nullptr, kind, "matmul_nt");
}

template <typename S>
Var<S> affine_nt(Var<S> x, Var<S> w, Var<S> bias, MacKind kind) {
  return linear_nt<S>(x, w, &bias, kind, "affine_nt");
}

template <typename S>
Var<S> field_stack(Var<S> grid, std::size_t kT, std::size_t kN) {
  const Tensor<S>& G = grid.value();
  require_rank(G.shape(), 3, "field_stack");
  if (kT % 2 == 0 || kN % 2 == 0) {
    throw ShapeError("field extents must be odd, got " + std::to_string(kT) + "x" +
                     std::to_string(kN));
  }
  const std::size_t T = G.dim(0), N = G.dim(1), C = G.dim(2), K = kT * kN;
  const long hT = static_cast<long>(kT / 2), hN = static_cast<long>(kN / 2);
  Tensor<S> U(Shape{T, N, K, C});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const long st = static_cast<long>(t) + static_cast<long>(k / kN) - hT;
        const long sn = static_cast<long>(n) + static_cast<long>(k % kN) - hN;
        if (st < 0 || sn < 0 || st >= static_cast<long>(T) || sn >= static_cast<long>(N)) continue;
        const S* src = G.data() + (static_cast<std::size_t>(st) * N + static_cast<std::size_t>(sn)) * C;
        std::copy(src, src + C, U.data() + ((t * N + n) * K + k) * C);
      }
    }
  }
  const std::size_t ig = grid.id();
  return grid.tape().record(std::move(U), {grid}, [=](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dU = tp.grad_of(self);
    Tensor<S>& dG = tp.grad_buffer(ig);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
          const long st = static_cast<long>(t) + static_cast<long>(k / kN) - hT;
          const long sn = static_cast<long>(n) + static_cast<long>(k % kN) - hN;
          if (st < 0 || sn < 0 || st >= static_cast<long>(T) || sn >= static_cast<long>(N)) continue;
          S* dst = dG.data() + (static_cast<std::size_t>(st) * N + static_cast<std::size_t>(sn)) * C;
          kernels::axpy(S{1}, dU.data() + ((t * N + n) * K + k) * C, dst, C);
        }
      }
    }
  });
}

template <typename S>
Var<S> grid_conv(Var<S> grid, Var<S> kernel, Var<S> bias, MacKind kind) {
  const Shape& gs = grid.shape();
  const Shape& ks = kernel.shape();
  require_rank(gs, 3, "grid_conv");
  require_rank(ks, 4, "grid_conv kernel");
  if (ks[3] != gs[2]) {
    throw ShapeError("grid_conv: kernel " + to_string(ks) + " does not match grid channels " +
                     to_string(gs));
  }
  const std::size_t T = gs[0], N = gs[1], Cin = gs[2];
  const std::size_t Cout = ks[0], kT = ks[1], kN = ks[2];
  Var<S> u = field_stack(grid, kT, kN);
  Var<S> rows = reshape(u, Shape{T * N, kT * kN * Cin});
  Var<S> w = reshape(kernel, Shape{Cout, kT * kN * Cin});
  return reshape(affine_nt(rows, w, bias, kind), Shape{T, N, Cout});
}

template <typename S>
Var<S> softmax_axis(Var<S> t, std::size_t axis) {
  const Tensor<S>& X = t.value();
  const AxisSplit a = split_axis(X.shape(), axis, "softmax_axis");
  Tensor<S> Y(X.shape());
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t in = 0; in < a.inner; ++in) {
      const std::size_t base = o * a.len * a.inner + in;
      S mx = X[base];
      for (std::size_t j = 1; j < a.len; ++j) mx = std::max(mx, X[base + j * a.inner]);
      S z = 0;
      for (std::size_t j = 0; j < a.len; ++j) {
        const S e = std::exp(X[base + j * a.inner] - mx);
        Y[base + j * a.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < a.len; ++j) Y[base + j * a.inner] /= z;
    }
  }
  const std::size_t ix = t.id();
  return t.tape().record(std::move(Y), {t}, [ix, a](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    const Tensor<S>& Y = tp.value(self);
    Tensor<S>& dX = tp.grad_buffer(ix);
    for (std::size_t o = 0; o < a.outer; ++o) {
      for (std::size_t in = 0; in < a.inner; ++in) {
        const std::size_t base = o * a.len * a.inner + in;
        S s = 0;
        for (std::size_t j = 0; j < a.len; ++j) s += dY[base + j * a.inner] * Y[base + j * a.inner];
        for (std::size_t j = 0; j < a.len; ++j) {
          const std::size_t p = base + j * a.inner;
          dX[p] += Y[p] * (dY[p] - s);
        }
      }
    }
  });
}

template <typename S>
Var<S> relu(Var<S> t) {
  const Tensor<S>& X = t.value();
  Tensor<S> Y(X.shape());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < X.size(); ++i) {
    Y[i] = X[i] > S{0} ? X[i] : S{0};
    margin = std::min(margin, static_cast<double>(std::abs(X[i])));
  }
  Tape<S>& tape = t.tape();
  tape.note_margin(margin);
  const std::size_t ix = t.id();
  return tape.record(std::move(Y), {t}, [ix](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    const Tensor<S>& X = tp.value(ix);
    Tensor<S>& dX = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X[i] > S{0}) dX[i] += dY[i];
    }
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  const Tensor<S>& A = a.value();
  const Tensor<S>& B = b.value();
  if (A.shape() != B.shape()) {
    throw ShapeError("add: shape mismatch " + to_string(A.shape()) + " vs " + to_string(B.shape()));
  }
  Tensor<S> C = A;
  kernels::axpy(S{1}, B.data(), C.data(), C.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(C), {a, b}, [ia, ib](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dC = tp.grad_of(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Tensor<S>& d = tp.grad_buffer(id);
      kernels::axpy(S{1}, dC.data(), d.data(), d.size());
    }
  });
}

template <typename S>
Var<S> scale(Var<S> t, S factor) {
  Tensor<S> Y = t.value();
  for (S& v : Y.values()) v *= factor;
  const std::size_t ix = t.id();
  return t.tape().record(std::move(Y), {t}, [ix, factor](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    Tensor<S>& dX = tp.grad_buffer(ix);
    kernels::axpy(factor, dY.data(), dX.data(), dX.size());
  });
}

template <typename S>
Var<S> reshape(Var<S> t, Shape shape) {
  Tensor<S> Y = t.value().reshaped(std::move(shape));
  const std::size_t ix = t.id();
  return t.tape().record(std::move(Y), {t}, [ix](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    Tensor<S>& dX = tp.grad_buffer(ix);
    kernels::axpy(S{1}, dY.data(), dX.data(), dX.size());
  });
}

template <typename S>
Var<S> reduce_max_axis(Var<S> t, std::size_t axis, std::span<const std::uint8_t> mask) {
  const Tensor<S>& X = t.value();
  const AxisSplit a = split_axis(X.shape(), axis, "reduce_max_axis");
  if (!mask.empty() && mask.size() != a.outer * a.len) {
    throw ShapeError("reduce_max_axis: mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(a.outer * a.len));
  }
  Tensor<S> Y(drop_axis(X.shape(), axis));
  // Flat source index of each output, or npos for fully masked slices.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> arg(Y.size(), npos);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t in = 0; in < a.inner; ++in) {
      std::size_t best = npos;
      S best_v = 0, second_v = 0;
      bool have_second = false;
      for (std::size_t j = 0; j < a.len; ++j) {
        if (!mask.empty() && !mask[o * a.len + j]) continue;
        const std::size_t p = (o * a.len + j) * a.inner + in;
        if (best == npos) {
          best = p;
          best_v = X[p];
        } else if (X[p] > best_v) {
          second_v = best_v;
          have_second = true;
          best = p;
          best_v = X[p];
        } else if (!have_second || X[p] > second_v) {
          second_v = X[p];
          have_second = true;
        }
      }
      const std::size_t out = o * a.inner + in;
      arg[out] = best;
      Y[out] = best == npos ? S{0} : best_v;
      if (have_second) margin = std::min(margin, static_cast<double>(best_v - second_v));
    }
  }
  Tape<S>& tape = t.tape();
  tape.note_margin(margin);
  const std::size_t ix = t.id();
  return tape.record(std::move(Y), {t}, [ix, arg = std::move(arg)](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    Tensor<S>& dX = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] != npos) dX[arg[i]] += dY[i];
    }
  });
}

template <typename S>
Var<S> reduce_mean_axis(Var<S> t, std::size_t axis) {
  const Tensor<S>& X = t.value();
  const AxisSplit a = split_axis(X.shape(), axis, "reduce_mean_axis");
  Tensor<S> Y(drop_axis(X.shape(), axis));
  const S inv = S{1} / static_cast<S>(a.len);
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t in = 0; in < a.inner; ++in) {
      S s = 0;
      for (std::size_t j = 0; j < a.len; ++j) s += X[(o * a.len + j) * a.inner + in];
      Y[o * a.inner + in] = s * inv;
    }
  }
  const std::size_t ix = t.id();
  return t.tape().record(std::move(Y), {t}, [ix, a, inv](Tape<S>& tp, std::size_t self) {
    const Tensor<S>& dY = tp.grad_of(self);
    Tensor<S>& dX = tp.grad_buffer(ix);
    for (std::size_t o = 0; o < a.outer; ++o) {
      for (std::size_t j = 0; j < a.len; ++j) {
        for (std::size_t in = 0; in < a.inner; ++in) {
          dX[(o * a.len + j) * a.inner + in] += dY[o * a.inner + in] * inv;
        }
      }
    }
  });
}

template <typename S>
Var<S> sum(Var<S> t) {
  const Tensor<S>& X = t.value();
  S s = 0;
  for (S v : X.values()) s += v;
  const std::size_t ix = t.id();
  return t.tape().record(Tensor<S>::scalar(s), {t}, [ix](Tape<S>& tp, std::size_t self) {
    const S g = tp.grad_of(self)[0];
    Tensor<S>& dX = tp.grad_buffer(ix);
    for (S& v : dX.values()) v += g;
  });
}

template <typename S>
Var<S> cross_entropy(Var<S> logits, std::size_t label) {
  const Tensor<S>& L = logits.value();
  const std::size_t C = L.size();
  if (label >= C) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(C) + ")");
  }
  S mx = L[0];
  for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, L[c]);
  std::vector<S> p(C);
  S z = 0;
  for (std::size_t c = 0; c < C; ++c) {
    p[c] = std::exp(L[c] - mx);
    z += p[c];
  }
  for (S& v : p) v /= z;
  const S loss = mx + std::log(z) - L[label];
  const std::size_t il = logits.id();
  return logits.tape().record(
      Tensor<S>::scalar(loss), {logits}, [il, label, p = std::move(p)](Tape<S>& tp, std::size_t self) {
        const S g = tp.grad_of(self)[0];
        Tensor<S>& dL = tp.grad_buffer(il);
        for (std::size_t c = 0; c < p.size(); ++c) {
          dL[c] += g * (p[c] - (c == label ? S{1} : S{0}));
        }
      });
}

#define DIN_INSTANTIATE(S)                                                               \
  template class Tape<S>;                                                                \
  template Var<S> matmul<S>(Var<S>, Var<S>, MacKind);                                    \
  template Var<S> matmul_nt<S>(Var<S>, Var<S>, MacKind);                                 \
  template Var<S> affine_nt<S>(Var<S>, Var<S>, Var<S>, MacKind);                         \
  template Var<S> field_stack<S>(Var<S>, std::size_t, std::size_t);                      \
  template Var<S> grid_conv<S>(Var<S>, Var<S>, Var<S>, MacKind);                         \
  template Var<S> softmax_axis<S>(Var<S>, std::size_t);                                  \
  template Var<S> relu<S>(Var<S>);                                                       \
  template Var<S> add<S>(Var<S>, Var<S>);                                                \
  template Var<S> scale<S>(Var<S>, S);                                                   \
  template Var<S> reshape<S>(Var<S>, Shape);                                             \
  template Var<S> reduce_max_axis<S>(Var<S>, std::size_t, std::span<const std::uint8_t>); \
  template Var<S> reduce_mean_axis<S>(Var<S>, std::size_t);                              \
  template Var<S> sum<S>(Var<S>);                                                        \
  template Var<S> cross_entropy<S>(Var<S>, std::size_t);

DIN_INSTANTIATE(float)
DIN_INSTANTIATE(double)
DIN_INSTANTIATE(long double)

#undef DIN_INSTANTIATE

}  // namespace din
