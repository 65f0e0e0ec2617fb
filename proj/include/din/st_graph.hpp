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

// Spatio-temporal person grid, interaction-field geometry and the bilinear
// sampler used by the dynamic walk.
//
// Coordinates are 0-based: t in [0, T-1] indexes frames, n in [0, N-1] indexes
// persons ordered by their position in the scene.

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>

#include "din/autodiff.hpp"
#include "din/tensor.hpp"

namespace din {

// kT x kN window centred on a grid position. Members are enumerated row-major
// over (dt, dn); the same order indexes conv kernels, relations and offsets.
class FieldSpec {
 public:
  FieldSpec() = default;
  // Throws std::invalid_argument unless both extents are odd and >= 1.
  FieldSpec(std::size_t kT, std::size_t kN);

  // "kTxkN", e.g. "3x3" or "1x9".
  static FieldSpec parse(std::string_view text);

  std::size_t kT() const { return kT_; }
  std::size_t kN() const { return kN_; }
  std::size_t size() const { return kT_ * kN_; }

  // (dt, dn) displacement of member k.
  std::pair<long, long> offset(std::size_t k) const {
    return {static_cast<long>(k / kN_) - static_cast<long>(kT_ / 2),
            static_cast<long>(k % kN_) - static_cast<long>(kN_ / 2)};
  }

  std::string to_string() const;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;

 private:
  std::size_t kT_ = 1;
  std::size_t kN_ = 1;
};

// T x N x D person features.
template <typename S>
class FeatureGrid {
 public:
  explicit FeatureGrid(Tensor<S> data);
  FeatureGrid(std::size_t T, std::size_t N, std::size_t D) : FeatureGrid(Tensor<S>(Shape{T, N, D})) {}

  std::size_t T() const { return data_.dim(0); }
  std::size_t N() const { return data_.dim(1); }
  std::size_t D() const { return data_.dim(2); }

  const Tensor<S>& tensor() const { return data_; }
  Tensor<S>& tensor() { return data_; }

  const S* at(std::size_t t, std::size_t n) const { return data_.data() + (t * N() + n) * D(); }
  S* at(std::size_t t, std::size_t n) { return data_.data() + (t * N() + n) * D(); }

 private:
  Tensor<S> data_;
};

template <typename S>
struct Coord {
  S t = 0;
  S n = 0;
};

template <typename S>
Coord<S> clamp_coord(Coord<S> c, std::size_t T, std::size_t N);

// Stacked features u_i of the field around (t, n): [K x D], zero vectors for
// members outside the grid.
template <typename S>
Tensor<S> extract_field(const FeatureGrid<S>& grid, std::size_t t, std::size_t n, const FieldSpec& field);

// Bilinear interpolation at an already clamped coordinate, using the (at most
// four) grid cells with non-zero weight.
template <typename S>
Tensor<S> bilinear_sample(const FeatureGrid<S>& grid, Coord<S> c);

// Walked coordinate of member k at position (t, n): the member's lattice
// position plus the predicted offset, clamped once at the end.
template <typename S>
Coord<S> walked_coord(std::size_t t, std::size_t n, std::size_t k, const FieldSpec& field, S dt, S dn,
                      std::size_t T, std::size_t N);

// Differentiable dynamic-walk sampling. grid [T x N x D], offsets
// [T x N x K x 2] holding (dt, dn) per member; returns [T x N x K x D].
// Gradients reach both the grid and the offsets; an offset whose walked
// coordinate was clamped receives no gradient on that axis.
template <typename S>
Var<S> walk_sample(Var<S> grid, Var<S> offsets, const FieldSpec& field);

// Stacked field features [T x N x K x D] of a [T x N x D] grid.
template <typename S>
Var<S> stack_field(Var<S> grid, const FieldSpec& field) {
  return field_stack(grid, field.kT(), field.kN());
}

// out[t,n,:] = sum_k weights[t,n,k] * members[t,n,k,:]
template <typename S>
Var<S> field_aggregate(Var<S> weights, Var<S> members);

// out[t,n,k] = <query[t,n,:], members[t,n,k,:]>
template <typename S>
Var<S> field_dot(Var<S> query, Var<S> members);

}  // namespace din
