// Copyright 2026 The EGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "egt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "egt/errors.hpp"

namespace egt {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) {
      throw ContractError("tensor extents must be positive, got " +
                          shape_to_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : Tensor(std::move(shape), AlignedVector(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, AlignedVector data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw ContractError("tensor shape " + shape_to_string(shape_) +
                        " does not match " + std::to_string(data_.size()) +
                        " values");
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const& {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::reshaped(Shape shape) && {
  return Tensor(std::move(shape), std::move(data_));
}

Tensor Tensor::slice(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) {
    throw ContractError("slice index " + std::to_string(index) +
                        " out of range for " + shape_to_string(shape_));
  }
  Shape inner(shape_.begin() + 1, shape_.end());
  if (inner.empty()) inner = {1};
  const std::size_t n = shape_numel(inner);
  return Tensor(inner, AlignedVector(data_.begin() + index * n,
                                     data_.begin() + (index + 1) * n));
}

void Tensor::set_slice(std::size_t index, const Tensor& value) {
  if (shape_.empty() || index >= shape_[0]) {
    throw ContractError("slice index out of range");
  }
  const std::size_t n = data_.size() / shape_[0];
  if (value.size() != n) {
    throw ContractError("slice of " + shape_to_string(shape_) +
                        " cannot hold " + shape_to_string(value.shape()));
  }
  std::copy(value.data_.begin(), value.data_.end(), data_.begin() + index * n);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ContractError("stack of zero tensors");
  Shape shape = items.front().shape();
  shape.insert(shape.begin(), items.size());
  AlignedVector data;
  data.reserve(shape_numel(shape));
  for (const Tensor& t : items) {
    if (t.shape() != items.front().shape()) {
      throw ContractError("stack: mismatched shapes " +
                          shape_to_string(t.shape()) + " and " +
                          shape_to_string(items.front().shape()));
    }
    data.insert(data.end(), t.vec().begin(), t.vec().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape " +
                        shape_to_string(a.shape()) + " vs " +
                        shape_to_string(b.shape()));
  }
}

}  // namespace egt
