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

// Helpers shared by the unit and acceptance tests. Everything here is
// written independently of the library code it is used to check.

#ifndef DENSEVG_TESTS_TEST_UTIL_H_
#define DENSEVG_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "densevg/matrix.h"
#include "densevg/random.h"
#include "densevg/tensor.h"

namespace densevg::testing {

inline Tensor RandomTensor(Shape shape, Rng& rng, double lo = -1.0,
                           double hi = 1.0, bool requires_grad = true) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> data(n);
  for (double& v : data) v = rng.Uniform(lo, hi);
  return Tensor::FromData(std::move(shape), std::move(data), requires_grad);
}

inline Matrix RandomMatrix(std::size_t rows, std::size_t cols, Rng& rng,
                           double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values) v = rng.Uniform(lo, hi);
  return m;
}

// Central-difference gradient of f with respect to every entry of x.
inline std::vector<double> NumericGradient(const std::function<double()>& f,
                                           Tensor& x, double h = 1e-6) {
  std::vector<double> grad(x.numel());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double plus = f();
    data[i] = saved - h;
    const double minus = f();
    data[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

inline double RelativeError(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

inline double MaxAbsDiff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

// Interval measures by sweeping the elementary segments between the sorted
// endpoints of both intervals and testing each segment midpoint.
struct IntervalMeasures {
  double intersection = 0.0;
  double union_length = 0.0;
  double enclosure = 0.0;
};

inline IntervalMeasures SweepIntervals(double a0, double a1, double b0,
                                       double b1) {
  std::array<double, 4> p = {a0, a1, b0, b1};
  std::sort(p.begin(), p.end());
  IntervalMeasures m;
  m.enclosure = p[3] - p[0];
  for (int i = 0; i < 3; ++i) {
    const double len = p[i + 1] - p[i];
    if (len <= 0.0) continue;
    const double mid = 0.5 * (p[i] + p[i + 1]);
    const bool in_a = a0 <= mid && mid <= a1;
    const bool in_b = b0 <= mid && mid <= b1;
    if (in_a && in_b) m.intersection += len;
    if (in_a || in_b) m.union_length += len;
  }
  return m;
}

inline double OracleIou(double a0, double a1, double b0, double b1) {
  const IntervalMeasures m = SweepIntervals(a0, a1, b0, b1);
  if (m.union_length <= 0.0) return (a0 == b0 && a1 == b1) ? 1.0 : 0.0;
  return m.intersection / m.union_length;
}

inline double OracleGiou(double a0, double a1, double b0, double b1) {
  const IntervalMeasures m = SweepIntervals(a0, a1, b0, b1);
  const double iou = OracleIou(a0, a1, b0, b1);
  if (m.enclosure <= 0.0) return iou;
  return iou - (m.enclosure - m.union_length) / m.enclosure;
}

inline std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path ScratchDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("densevg_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace densevg::testing

#endif  // DENSEVG_TESTS_TEST_UTIL_H_
