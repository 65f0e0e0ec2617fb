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

#include "din/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace din {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename S>
Tensor<S>::Tensor(Shape shape, S fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(numel(shape_), fill);
}

template <typename S>
Tensor<S>::Tensor(Shape shape, std::vector<S> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  if (values_.size() != numel(shape_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

template <typename S>
Tensor<S> Tensor<S>::reshaped(Shape shape) const {
  if (numel(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  Tensor out(std::move(shape), values_);
  out.requires_grad_ = requires_grad_;
  return out;
}

template <typename S>
void Tensor<S>::fill(S value) {
  std::fill(values_.begin(), values_.end(), value);
}

template <typename S>
std::size_t Tensor<S>::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                     to_string(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;

}  // namespace din
