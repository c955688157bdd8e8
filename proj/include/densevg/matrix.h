// Copyright 2026 The densevg Authors.
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

#ifndef DENSEVG_MATRIX_H_
#define DENSEVG_MATRIX_H_

#include <cstddef>
#include <span>
#include <vector>

#include "densevg/error.h"

namespace densevg {

// Plain row-major matrix of doubles used for features and attention dumps.
// Carries no gradient information; see Tensor for differentiable values.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v)
      : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) {
      throw ShapeError("matrix data length does not match rows*cols");
    }
  }

  double& operator()(std::size_t r, std::size_t c) {
    return values[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }

  std::span<double> Row(std::size_t r) {
    return {values.data() + r * cols, cols};
  }
  std::span<const double> Row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }

  // Rows at the given indices, in the given order.
  Matrix SelectRows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;
};

}  // namespace densevg

#endif  // DENSEVG_MATRIX_H_
