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

// Person-specific interaction graphs read out of a forward pass, their sum
// over positions (the group graph) and the key person.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "din/reasoning.hpp"
#include "din/tensor.hpp"

namespace din {

// One relation of the person at (t, n): member k, where it ended up after the
// walk, and its normalised weight.
struct PersonEdge {
  std::size_t t = 0, n = 0, k = 0;
  double walked_t = 0, walked_n = 0;
  double weight = 0;
};

struct InteractionGraphExport {
  std::size_t T = 0, N = 0;
  std::size_t members = 0;  // relations per person
  std::vector<PersonEdge> edges;  // ordered by (t, n, k)
  // [T x N] incoming weight snapped to grid cells.
  Tensor<double> group;
  // Group graph summed over t, one entry per slot.
  std::vector<double> key_scores;
  std::size_t key_person = 0;
};

// Nearest cell of a coordinate, ties toward the lower index, clamped into the
// grid so every weight lands somewhere.
std::pair<std::size_t, std::size_t> snap_to_cell(double t, double n, std::size_t T, std::size_t N);

// Builds the export from recorded relations [T x N x M] and, for walking
// layers, offsets [T x N x K x 2].
InteractionGraphExport build_export(const Tensor<double>& relations, const Tensor<double>* offsets,
                                    const FieldSpec& field, bool fully_connected);

// Runs the model on grid and exports reasoning layer `layer`. Throws
// std::invalid_argument for the Base variant or a missing layer.
template <typename S>
InteractionGraphExport export_interaction_graphs(const ModelParams<S>& params, const DinConfig& config,
                                                 const Tensor<S>& grid, std::size_t layer = 0);

// Columns t, n, k, walked_t, walked_n, weight; 9 significant digits.
std::string graphs_csv(const InteractionGraphExport& g);

}  // namespace din
