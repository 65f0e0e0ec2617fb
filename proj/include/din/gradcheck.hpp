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

// Central-difference gradient audits.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "din/autodiff.hpp"
#include "din/reasoning.hpp"

namespace din {

struct FdResult {
  // max_i |analytic_i - numeric_i| / (|numeric_i| + 1e-8)
  double max_rel_error = 0;
  std::size_t worst = 0;
  double analytic = 0;  // at the worst coordinate
  double numeric = 0;
  std::size_t checked = 0;
};

// Compares a given analytic gradient of f at point against central
// differences with step eps.
FdResult finite_diff_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                           std::span<const double> analytic, double eps = 1e-5);

// Scalar tape function of one leaf; the analytic gradient comes from backward.
using TapeFunction = std::function<Var<double>(Tape<double>&, Var<double>)>;
FdResult finite_diff_check(const TapeFunction& f, const Tensor<double>& point, double eps = 1e-5);

struct ModelAudit {
  FdResult fd;
  std::size_t resamples = 0;  // draws rejected for lying near a kink
  double margin = 0;          // distance to the nearest kink at the accepted draw
};

// Cross-entropy of the model on a random T x N grid with every parameter,
// including the zero-initialised relation and offset convolutions, drawn at
// random from seed. Draws whose forward pass comes within min_margin of a
// non-differentiable point are rejected and redrawn. Checks the gradient of
// every parameter.
ModelAudit audit_model_gradients(const DinConfig& config, std::uint64_t seed, std::size_t T, std::size_t N,
                                 double eps = 1e-5, double min_margin = 1e-3);

}  // namespace din
