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

// Reverse-mode differentiation on a dynamically recorded tape.
//
// A Tensor is a cheap handle to a graph node. Every operation below returns a
// fresh node; when any operand requires a gradient and recording is enabled,
// the node remembers its operands and a backward rule. Backward() walks the
// recorded graph from a scalar in reverse topological order and accumulates
// gradients into every reachable node that requires one. Gradients keep
// accumulating across calls until ZeroGrad() is called.
//
// Shapes are lists of positive sizes. Row-wise operations (softmax, layer
// norm, slicing, concatenation) act on the last axis and treat all leading
// axes as rows.

#ifndef DENSEVG_TENSOR_H_
#define DENSEVG_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "densevg/matrix.h"
#include "densevg/random.h"

namespace densevg {

using Shape = std::vector<std::size_t>;

// Element mask for MaskedSoftmax; nonzero entries take part in normalization.
using Mask = std::vector<std::uint8_t>;

// Additive bias applied to masked logits before normalization.
inline constexpr double kMaskedLogit = -1e30;

std::string ShapeToString(const Shape& shape);

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first written
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& GradBuffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace internal

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor FromMatrix(const Matrix& m, bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  // Product of all leading axes; 1 for rank-1 tensors.
  std::size_t rows() const;
  // Size of the last axis.
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->data[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->GradBuffer(); }
  void ZeroGrad() { node_->grad.clear(); }

  Matrix ToMatrix() const;
  // Same values, no lineage, no gradient requirement.
  Tensor Detach() const;

  const std::shared_ptr<internal::Node>& node() const { return node_; }

 private:
  std::shared_ptr<internal::Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradRecordingEnabled();

// Accumulates d(loss)/d(node) into every reachable node requiring a gradient.
// Throws ShapeError when loss is not a single element.
void Backward(const Tensor& loss);

// Rank-2 products.
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& x);

// Elementwise; operands must have identical shapes.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Minimum(const Tensor& a, const Tensor& b);
Tensor Maximum(const Tensor& a, const Tensor& b);

// Adds a length-cols() vector to every row.
Tensor AddBias(const Tensor& x, const Tensor& bias);

Tensor Scale(const Tensor& x, double factor);
Tensor AddScalar(const Tensor& x, double value);
Tensor Relu(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Abs(const Tensor& x);
// max(x, floor); the gradient is zero where the floor is active.
Tensor ClampMin(const Tensor& x, double floor);

// Row-wise softmax over the last axis, max-subtracted.
Tensor Softmax(const Tensor& x);
// As Softmax, with kMaskedLogit added wherever allowed[i] == 0. Masked
// entries come out as exactly 0. A row with no allowed entry is an error.
Tensor MaskedSoftmax(const Tensor& x, const Mask& allowed);

// Row-wise normalization with population variance, then gain * x + bias.
Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

Tensor ConcatCols(std::span<const Tensor> parts);
// Columns [begin, end) of every row.
Tensor SliceCols(const Tensor& x, std::size_t begin, std::size_t end);
// Rows of a rank-2 tensor, in the given order; repeats allowed.
Tensor GatherRows(const Tensor& x, std::span<const std::size_t> indices);

// Reductions. Sum and Mean return shape {1}; RowSum returns {rows, 1}.
Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
Tensor RowSum(const Tensor& x);

// Inverted dropout; identity when p == 0.
Tensor Dropout(const Tensor& x, double p, Rng& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return Mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return Div(a, b); }

// Named learnable tensors, iterated in insertion order.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  // Registers a tensor under a unique name; the tensor must require grad.
  Tensor& Add(std::string name, Tensor tensor);
  const Tensor& Get(std::string_view name) const;
  Tensor& Get(std::string_view name);
  bool Contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t NumScalars() const;
  void ZeroGrad();

  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ParameterGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::vector<ParameterGradError> per_parameter;

  const ParameterGradError& Worst() const;
};

// Compares Backward() against central differences for every scalar of every
// parameter. Relative error per entry is
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// `loss` must be deterministic. Parameter gradients are zeroed first and left
// holding the analytic gradient.
FiniteDiffReport FiniteDiffCheck(
    const std::function<Tensor(ParameterSet&)>& loss, ParameterSet& params,
    double h = 1e-5);

}  // namespace densevg

#endif  // DENSEVG_TENSOR_H_
