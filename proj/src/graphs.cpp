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

#include "din/graphs.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace din {

std::pair<std::size_t, std::size_t> snap_to_cell(double t, double n, std::size_t T, std::size_t N) {
  auto snap = [](double c, std::size_t extent) {
    const double r = std::ceil(c - 0.5);
    if (r <= 0) return std::size_t{0};
    if (r >= static_cast<double>(extent - 1)) return extent - 1;
    return static_cast<std::size_t>(r);
  };
  return {snap(t, T), snap(n, N)};
}

InteractionGraphExport build_export(const Tensor<double>& relations, const Tensor<double>* offsets,
                                    const FieldSpec& field, bool fully_connected) {
  if (relations.rank() != 3) throw ShapeError("relations must be T x N x M, got " + to_string(relations.shape()));
  InteractionGraphExport g;
  g.T = relations.dim(0);
  g.N = relations.dim(1);
  g.members = relations.dim(2);
  const std::size_t T = g.T, N = g.N, M = g.members;
  if (fully_connected ? M != T * N : M != field.size()) {
    throw ShapeError("relations have " + std::to_string(M) + " members per person");
  }
  if (offsets && offsets->shape() != Shape{T, N, M, 2}) {
    throw ShapeError("offsets must be " + to_string(Shape{T, N, M, 2}) + ", got " + to_string(offsets->shape()));
  }
  g.group = Tensor<double>({T, N});
  g.edges.reserve(T * N * M);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < M; ++k) {
        PersonEdge e;
        e.t = t;
        e.n = n;
        e.k = k;
        e.weight = relations.at(t, n, k);
        if (fully_connected) {
          e.walked_t = static_cast<double>(k / N);
          e.walked_n = static_cast<double>(k % N);
        } else if (offsets) {
          const Coord<double> c = walked_coord<double>(t, n, k, field, offsets->at(t, n, k, 0),
                                                       offsets->at(t, n, k, 1), T, N);
          e.walked_t = c.t;
          e.walked_n = c.n;
        } else {
          const auto [dt, dn] = field.offset(k);
          e.walked_t = static_cast<double>(t) + static_cast<double>(dt);
          e.walked_n = static_cast<double>(n) + static_cast<double>(dn);
        }
        const auto [ct, cn] = snap_to_cell(e.walked_t, e.walked_n, T, N);
        g.group.at(ct, cn) += e.weight;
        g.edges.push_back(e);
      }
    }
  }
  g.key_scores.assign(N, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) g.key_scores[n] += g.group.at(t, n);
  }
  for (std::size_t n = 1; n < N; ++n) {
    if (g.key_scores[n] > g.key_scores[g.key_person]) g.key_person = n;
  }
  return g;
}

template <typename S>
InteractionGraphExport export_interaction_graphs(const ModelParams<S>& params, const DinConfig& config,
                                                 const Tensor<S>& grid, std::size_t layer) {
  if (config.variant == Variant::Base) throw std::invalid_argument("variant base has no relations to export");
  Tape<S> tape;
  ParamVars<S> vars = bind(tape, params, false);
  ForwardTrace<S> trace;
  forward(config, vars, tape.constant(grid), &trace);
  if (layer >= trace.layers.size()) {
    throw std::invalid_argument("model has " + std::to_string(trace.layers.size()) + " reasoning layers, asked for " +
                                std::to_string(layer));
  }
  const LayerTrace<S>& lt = trace.layers[layer];
  const Tensor<double> relations = lt.relations.value().template cast<double>();
  if (lt.offsets.valid()) {
    const Tensor<double> offsets = lt.offsets.value().template cast<double>();
    return build_export(relations, &offsets, lt.field, lt.fully_connected);
  }
  return build_export(relations, nullptr, lt.field, lt.fully_connected);
}

std::string graphs_csv(const InteractionGraphExport& g) {
  std::ostringstream os;
  os << "t,n,k,walked_t,walked_n,weight\n";
  char line[160];
  for (const PersonEdge& e : g.edges) {
    std::snprintf(line, sizeof line, "%zu,%zu,%zu,%.9g,%.9g,%.9g\n", e.t, e.n, e.k, e.walked_t, e.walked_n, e.weight);
    os << line;
  }
  return os.str();
}

template InteractionGraphExport export_interaction_graphs(const ModelParams<float>&, const DinConfig&,
                                                          const Tensor<float>&, std::size_t);
template InteractionGraphExport export_interaction_graphs(const ModelParams<double>&, const DinConfig&,
                                                          const Tensor<double>&, std::size_t);

}  // namespace din
