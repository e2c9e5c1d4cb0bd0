// Copyright 2026 The bevbeam Authors
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

#include <algorithm>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "bevbeam/errors.hpp"

namespace bevbeam {

using Shape = std::vector<std::size_t>;
using complex64 = std::complex<float>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, c64 = 3 };

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::f32;
};
template <>
struct dtype_of<double> {
  static constexpr DType value = DType::f64;
};
template <>
struct dtype_of<std::uint8_t> {
  static constexpr DType value = DType::u8;
};
template <>
struct dtype_of<complex64> {
  static constexpr DType value = DType::c64;
};

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape);

/// Dense row-major array with value semantics. The empty shape denotes a
/// scalar holding one element.
template <class T>
struct Array {
  Shape shape{0};
  std::vector<T> data;

  Array() = default;
  explicit Array(Shape s) : shape(std::move(s)), data(numel(shape), T{}) {}
  Array(Shape s, T fill) : shape(std::move(s)), data(numel(shape), fill) {}
  Array(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
      throw DimensionError("array: shape " + shape_str(shape) + " needs " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(data.size()));
    }
  }

  static Array scalar(T v) { return Array(Shape{}, std::vector<T>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape.size()) {
      throw DimensionError("array: index rank " + std::to_string(idx.size()) +
                           " does not match shape " + shape_str(shape));
    }
    std::size_t off = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      off = off * shape[d] + i;
      ++d;
    }
    return off;
  }
  T& at(std::initializer_list<std::size_t> idx) { return data[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const { return data[offset(idx)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Array<U> cast() const {
    Array<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  Array reshaped(Shape s) const {
    if (numel(s) != data.size()) {
      throw DimensionError("reshape: cannot view " + shape_str(shape) + " as " + shape_str(s));
    }
    return Array(std::move(s), data);
  }

  bool operator==(const Array& o) const = default;
};

}  // namespace bevbeam
