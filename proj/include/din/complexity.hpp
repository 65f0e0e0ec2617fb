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

// Parameter and FLOP accounting for the reasoning module.
//
// Conventions: parameters count weights only (biases are reported apart);
// FLOPs are 2 x the multiply-accumulates of the learned dense linear maps
// (relation/offset convolutions, update transform, embedded projections and
// the lite projection). Softmax, sampling, weighted aggregation, residual
// additions, the embedding and the classifier are not counted.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "din/autodiff.hpp"
#include "din/reasoning.hpp"

namespace din {

struct ComplexityReport {
  std::string variant;
  std::string field;
  std::size_t T = 0;
  std::size_t N = 0;
  std::size_t D = 0;
  std::size_t D_l = 0;  // 0 unless lite
  std::size_t K = 0;
  std::uint64_t params = 0;
  std::uint64_t biases = 0;
  std::uint64_t macs = 0;
  std::uint64_t flops = 0;
  std::string params_formula;
  std::string flops_formula;
};

// Weight count; flops/macs left at zero.
ComplexityReport count_params(const DinConfig& config);

// Weight count plus FLOPs on a T x N grid.
ComplexityReport count_flops(const DinConfig& config, std::size_t T, std::size_t N);

// Tally of the multiply-accumulates actually executed by one forward pass on
// grid [T x N x D], parameters drawn by init_params(config, 0).
MacTally instrumented_count(const DinConfig& config, const Tensor<double>& grid);

// Fixed-width text table, one row per report.
std::string render_table(const std::vector<ComplexityReport>& reports);

// "1.297M" / "0.311G" style, three decimals.
std::string format_scaled(double value, double unit, const char* suffix);

}  // namespace din
