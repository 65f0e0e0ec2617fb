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

// Reasoning modules over the person grid: embedded dot-product relations
// (within a field or fully connected), dynamic relation (DR), dynamic walk
// (DW), their combination, the spatial/temporal factorised stack, the lite
// projection, and the pooling/classification head.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "din/autodiff.hpp"
#include "din/st_graph.hpp"
#include "din/tensor.hpp"

namespace din {

enum class Variant {
  Base,      // pooling + classifier only
  EDP,       // embedded dot-product relations inside the field
  ARG,       // embedded dot-product relations over all T*N nodes
  DR,        // dynamic relation
  DW,        // dynamic walk with uniform relations
  DRDW,      // DR + DW, relations from the original field features
  DRDWStar,  // DR + DW, relations from the walked features
  STFactorised,  // DR + DW with a 1 x kN layer followed by a kT x 1 layer
};

std::string_view to_string(Variant v);

struct DinConfig {
  Variant variant = Variant::DRDW;
  // Pointwise projection from D to D_l ahead of the reasoning layers.
  bool lite = false;
  std::size_t D = 64;
  std::size_t D_l = 16;
  FieldSpec field{3, 3};
  std::size_t C = 8;
  // Width of raw input features; when non-zero a trainable linear embedding
  // maps them to D first. Zero means grids arrive D wide.
  std::size_t D_in = 0;

  std::size_t width() const { return lite ? D_l : D; }
  // Fields of the reasoning layers, in application order.
  std::vector<FieldSpec> layer_fields() const;
  // "base", "edp", "arg", "dr", "dw", "dr+dw", "dr+dw*", "st", with a "lite-"
  // prefix for the lite model.
  std::string name() const;
  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

// Parses a name produced by DinConfig::name() into variant and lite flag.
void parse_variant(std::string_view text, DinConfig& config);

// Named parameter tensors. Iteration order is lexicographic by name, which is
// also the flattening and serialisation order.
template <typename S>
class ModelParams {
 public:
  using Map = std::map<std::string, Tensor<S>>;

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  // Throws std::invalid_argument naming the missing parameter.
  const Tensor<S>& at(const std::string& name) const;
  Tensor<S>& at(const std::string& name);
  void set(const std::string& name, Tensor<S> value) { tensors_[name] = std::move(value); }

  const Map& tensors() const { return tensors_; }
  Map& tensors() { return tensors_; }

  std::size_t total_size() const;
  std::vector<S> flatten() const;
  void unflatten(std::span<const S> values);

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& [name, t] : tensors_) out.set(name, t.template cast<U>());
    return out;
  }

 private:
  Map tensors_;
};

// Relation and offset convolutions start at exactly zero; other weights are
// uniform in +-1/sqrt(fan_in), biases zero.
template <typename S>
ModelParams<S> init_params(const DinConfig& config, std::uint64_t seed);

// Checks names and shapes against the config.
template <typename S>
void check_params(const DinConfig& config, const ModelParams<S>& params);

template <typename S>
using ParamVars = std::map<std::string, Var<S>>;

template <typename S>
ParamVars<S> bind(Tape<S>& tape, const ModelParams<S>& params, bool requires_grad);

// Per-layer relations and offsets recorded during forward, for export.
template <typename S>
struct LayerTrace {
  FieldSpec field;
  // [T x N x M] weights; M = K for field variants, M = T*N for ARG.
  Var<S> relations;
  // [T x N x K x 2], only for walking variants.
  Var<S> offsets;
  bool fully_connected = false;
};

template <typename S>
struct ForwardTrace {
  std::vector<LayerTrace<S>> layers;
};

enum class RelationScope { Full, Field };
enum class RelationSource { Original, Walked };

// Scaled embedded dot-product relations, softmax-normalised. Field scope
// returns [T x N x K]; full scope returns [TN x TN].
template <typename S>
Var<S> edp_relations(Var<S> grid, Var<S> w_theta, Var<S> w_phi, RelationScope scope, const FieldSpec& field);

// x_i + relu(sum_j r_ij x_j w) over all T*N nodes; relations [TN x TN].
template <typename S>
Var<S> arg_update(Var<S> grid, Var<S> relations, Var<S> w);

// softmax_k(W_a u_i + b_a) as a [T x N x K] tensor.
template <typename S>
Var<S> dr_relations(Var<S> grid, Var<S> rel_kernel, Var<S> rel_bias, const FieldSpec& field);

// x_i + relu(sum_k a_ik x_k w) with x_k the (zero-padded) field members.
template <typename S>
Var<S> dr_update(Var<S> grid, Var<S> relations, Var<S> w, const FieldSpec& field);

// W_p u_i + b_p as [T x N x K x 2] (dt, dn) offsets, member-major channels.
template <typename S>
Var<S> dw_offsets(Var<S> grid, Var<S> off_kernel, Var<S> off_bias, const FieldSpec& field);

template <typename S>
Var<S> dw_sample(Var<S> grid, Var<S> offsets, const FieldSpec& field) {
  return walk_sample(grid, offsets, field);
}

// Parameters of one dynamic layer; unused members stay invalid.
template <typename S>
struct LayerVars {
  Var<S> rel_w, rel_b, off_w, off_b, w;
};

// x_i + relu(sum_k a_ik y_ik w) with walked features y.
template <typename S>
Var<S> din_update(Var<S> grid, const FieldSpec& field, const LayerVars<S>& params, RelationSource source,
                  LayerTrace<S>* trace = nullptr);

template <typename S>
Var<S> st_factorised_forward(Var<S> grid, const FieldSpec& spatial, const FieldSpec& temporal,
                             const LayerVars<S>& spatial_params, const LayerVars<S>& temporal_params,
                             ForwardTrace<S>* trace = nullptr);

// Pointwise projection, kernel [D_l x 1 x 1 x D].
template <typename S>
Var<S> lite_project(Var<S> grid, Var<S> kernel, Var<S> bias);

// Mean over t of the max over n; absent persons excluded through presence
// ([T x N], non-zero = present) when given.
template <typename S>
Var<S> global_pool(Var<S> grid, std::span<const std::uint8_t> presence = {});

// Logits [C] for a grid [T x N x D] (or [T x N x D_in] with an embedding).
template <typename S>
Var<S> forward(const DinConfig& config, const ParamVars<S>& params, Var<S> grid, ForwardTrace<S>* trace = nullptr,
               std::span<const std::uint8_t> presence = {});

template <typename S>
Tensor<S> forward(const DinConfig& config, const ModelParams<S>& params, const Tensor<S>& grid);

}  // namespace din
