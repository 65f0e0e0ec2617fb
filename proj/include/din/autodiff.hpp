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

#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every operation executed through the free functions below, in
// execution order. Tape::backward replays the record in reverse from a scalar
// loss and leaves one gradient per requires_grad node. Tapes share no state,
// so independent tapes may be used from different threads.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>

#include "din/tensor.hpp"

namespace din {

// Category a multiply-accumulate is tallied under. Dense covers the learned
// linear maps of the reasoning module, Head the embedding and classifier, and
// Aggregation the data-dependent products (relation dot products, weighted
// sums over neighbours).
enum class MacKind { Dense, Head, Aggregation };

struct MacTally {
  std::uint64_t dense = 0;
  std::uint64_t head = 0;
  std::uint64_t aggregation = 0;

  std::uint64_t total() const { return dense + head + aggregation; }
};

template <typename S>
class Tape;

template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<S>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<S>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<S>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename S>
class Tape {
 public:
  // Receives the tape and the id of the node whose upstream gradient is ready.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node; differentiable iff value.requires_grad().
  Var<S> leaf(Tensor<S> value);
  Var<S> constant(Tensor<S> value);

  // Appends an op output. The node requires grad iff any input does; the
  // backward closure is dropped otherwise.
  Var<S> record(Tensor<S> value, std::initializer_list<Var<S>> inputs, Backward backward);

  const Tensor<S>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  // Upstream gradient of a node during backward.
  const Tensor<S>& grad_of(std::size_t id) const { return nodes_.at(id).grad; }
  // Accumulation buffer of a node, zero-initialised on first use.
  Tensor<S>& grad_buffer(std::size_t id);

  // Throws std::invalid_argument for a non-scalar loss.
  void backward(Var<S> loss);

  // Gradient of v after backward(); zeros when v is disconnected from the loss.
  Tensor<S> grad(Var<S> v) const;

  std::size_t size() const { return nodes_.size(); }

  const MacTally& macs() const { return macs_; }
  void count(MacKind kind, std::uint64_t macs);

  // Smallest distance to a non-differentiable point (ReLU kink, max-pool tie,
  // integer sampling coordinate, clamp bound) seen while recording.
  double smooth_margin() const { return margin_; }
  void note_margin(double m) {
    if (m < margin_) margin_ = m;
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::deque<Node> nodes_;
  MacTally macs_;
  double margin_ = std::numeric_limits<double>::infinity();
};

template <typename S>
const Tensor<S>& Var<S>::value() const {
  return tape_->value(id_);
}

// C[m x n] = A[m x k] B[k x n]
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b, MacKind kind = MacKind::Dense);

// C[m x n] = A[m x k] B[n x k]^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b, MacKind kind = MacKind::Dense);

// Y[m x n] = X[m x k] W[n x k]^T + bias[n]
template <typename S>
Var<S> affine_nt(Var<S> x, Var<S> w, Var<S> bias, MacKind kind = MacKind::Dense);

// Zero-padded kT x kN window around every position of a [T x N x C] grid,
// stacked as [T x N x (kT*kN) x C]. Members are enumerated row-major over
// (dt, dn), dt in [-kT/2, kT/2], dn in [-kN/2, kN/2].
template <typename S>
Var<S> field_stack(Var<S> grid, std::size_t kT, std::size_t kN);

// Cross-correlation of grid [T x N x Cin] with kernel [Cout x kT x kN x Cin],
// zero padding, same output extents: [T x N x Cout]. kT and kN must be odd.
template <typename S>
Var<S> grid_conv(Var<S> grid, Var<S> kernel, Var<S> bias, MacKind kind = MacKind::Dense);

template <typename S>
Var<S> softmax_axis(Var<S> t, std::size_t axis);

template <typename S>
Var<S> relu(Var<S> t);

template <typename S>
Var<S> add(Var<S> a, Var<S> b);

template <typename S>
Var<S> scale(Var<S> t, S factor);

template <typename S>
Var<S> reshape(Var<S> t, Shape shape);

// Max over one axis; the axis is removed from the shape. The gradient goes to
// the first arg-max in index order. An optional presence mask, indexed by
// (outer, axis) position, excludes entries; a fully masked slice yields 0.
template <typename S>
Var<S> reduce_max_axis(Var<S> t, std::size_t axis, std::span<const std::uint8_t> mask = {});

template <typename S>
Var<S> reduce_mean_axis(Var<S> t, std::size_t axis);

template <typename S>
Var<S> sum(Var<S> t);

// -log softmax(logits)[label]
template <typename S>
Var<S> cross_entropy(Var<S> logits, std::size_t label);

}  // namespace din
