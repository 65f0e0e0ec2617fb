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

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace din {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major tensor. Extents are positive; the value buffer always holds
// exactly numel(shape) elements.
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S{0});
  Tensor(Shape shape, std::vector<S> values);

  static Tensor scalar(S value) { return Tensor(Shape{1}, std::vector<S>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<S> values() { return values_; }
  std::span<const S> values() const { return values_; }
  S* data() { return values_.data(); }
  const S* data() const { return values_.data(); }

  S& operator[](std::size_t i) { return values_[i]; }
  S operator[](std::size_t i) const { return values_[i]; }

  template <typename... I>
  S& at(I... idx) {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... I>
  S at(I... idx) const {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    return *this;
  }

  // Same buffer under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(S value);

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    Tensor<U> t(shape_, std::move(out));
    t.set_requires_grad(requires_grad_);
    return t;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<S> values_;
  bool requires_grad_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace din
