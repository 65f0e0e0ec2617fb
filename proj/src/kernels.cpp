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

#include "din/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace din::kernels {

namespace scalar {

template <typename S>
S dot(const S* a, const S* b, std::size_t n) {
  S acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename S>
void axpy(S alpha, const S* x, S* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);
template long double dot<long double>(const long double*, const long double*, std::size_t);
template void axpy<long double>(long double, const long double*, long double*, std::size_t);

}  // namespace scalar

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
  if (isa != Isa::Avx2) return false;
#if DIN_HAVE_AVX2_KERNELS
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detected_isa() { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("DIN_ISA")) {
    std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
  }
  return detected_isa();
}

std::atomic<Isa>& isa_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

Isa active_isa() { return isa_slot().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(to_string(isa)));
  }
  isa_slot().store(isa, std::memory_order_relaxed);
}

template <typename S>
S dot(const S* a, const S* b, std::size_t n) {
#if DIN_HAVE_AVX2_KERNELS
  if constexpr (!std::is_same_v<S, long double>) {
    if (active_isa() == Isa::Avx2) return avx2::dot(a, b, n);
  }
#endif
  return scalar::dot(a, b, n);
}

template <typename S>
void axpy(S alpha, const S* x, S* y, std::size_t n) {
#if DIN_HAVE_AVX2_KERNELS
  if constexpr (!std::is_same_v<S, long double>) {
    if (active_isa() == Isa::Avx2) return avx2::axpy(alpha, x, y, n);
  }
#endif
  scalar::axpy(alpha, x, y, n);
}

template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);
template long double dot<long double>(const long double*, const long double*, std::size_t);
template void axpy<long double>(long double, const long double*, long double*, std::size_t);

}  // namespace din::kernels
