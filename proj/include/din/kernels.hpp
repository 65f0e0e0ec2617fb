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

// Inner-loop arithmetic used by the autodiff ops. Every kernel has a portable
// scalar reference implementation and, on x86-64, an AVX2/FMA variant. The
// variant is chosen once at startup from the CPU features and the DIN_ISA
// environment variable ("scalar" or "avx2"), and can be switched with set_isa.
//
// The scalar kernels accumulate strictly in ascending index order. The AVX2
// kernels use lane-parallel partial sums, so dot() results differ from the
// reference in the last few ulps; both are deterministic run to run.

#include <cstddef>
#include <string_view>

namespace din::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa);

// Best ISA the running CPU supports.
Isa detected_isa();
bool isa_supported(Isa isa);

Isa active_isa();
// Throws std::invalid_argument when the CPU lacks the requested ISA.
void set_isa(Isa isa);

// Restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// sum_i a[i] * b[i]
template <typename S>
S dot(const S* a, const S* b, std::size_t n);

// y[i] += alpha * x[i]
template <typename S>
void axpy(S alpha, const S* x, S* y, std::size_t n);

namespace scalar {
template <typename S>
S dot(const S* a, const S* b, std::size_t n);
template <typename S>
void axpy(S alpha, const S* x, S* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define DIN_HAVE_AVX2_KERNELS 1
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#else
#define DIN_HAVE_AVX2_KERNELS 0
#endif

}  // namespace din::kernels
