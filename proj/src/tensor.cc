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

#include "densevg/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "densevg/error.h"

namespace densevg {
namespace {

using internal::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local bool grad_recording = true;

std::size_t Product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void CheckShape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero-sized axis in shape " + ShapeToString(shape));
  }
}

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeToString(a.shape()) + " vs " +
                     ShapeToString(b.shape()));
  }
}

void RequireRank2(const char* op, const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     ShapeToString(x.shape()));
  }
}

// Builds the output node; records lineage only when some input needs it.
Tensor MakeResult(Shape shape, std::vector<double> data,
                  std::initializer_list<Tensor> inputs,
                  std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_recording) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor MakeResultN(Shape shape, std::vector<double> data,
                   std::span<const Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_recording) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <typename Forward, typename Deriv>
Tensor Unary(const Tensor& x, Forward forward, Deriv deriv) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return MakeResult(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.GradBuffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
    }
  });
}

}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Matrix Matrix::SelectRows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("row index out of range");
    std::copy_n(values.begin() + indices[i] * cols, cols,
                out.values.begin() + i * cols);
  }
  return out;
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  CheckShape(shape);
  const std::size_t n = Product(shape);
  return FromData(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  CheckShape(shape);
  if (data.size() != Product(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + ShapeToString(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::FromMatrix(const Matrix& m, bool requires_grad) {
  return FromData({m.rows, m.cols}, m.values, requires_grad);
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const { return numel() / cols(); }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on non-scalar tensor " + ShapeToString(shape()));
  }
  return node_->data[0];
}

Matrix Tensor::ToMatrix() const { return Matrix(rows(), cols(), node_->data); }

Tensor Tensor::Detach() const { return FromData(shape(), node_->data, false); }

NoGradGuard::NoGradGuard() : previous_(grad_recording) {
  grad_recording = false;
}
NoGradGuard::~NoGradGuard() { grad_recording = previous_; }

bool GradRecordingEnabled() { return grad_recording; }

void Backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("Backward() needs a scalar loss, got " +
                     ShapeToString(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; each node appears once.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->GradBuffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    node->GradBuffer();
    node->backward(*node);
  }
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank2("matmul", a);
  RequireRank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ, " +
                     ShapeToString(a.shape()) + " x " +
                     ShapeToString(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return MakeResult({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      // dA = G * B^T
      auto& ga = pa.GradBuffer();
      const double* B = pb.data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      auto& gb = pb.GradBuffer();
      const double* A = pa.data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor Transpose(const Tensor& x) {
  RequireRank2("transpose", x);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  const auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  }
  return MakeResult({c, r}, std::move(out), {x}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.GradBuffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& g = parent->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape("div", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
      }
    }
  });
}

Tensor Minimum(const Tensor& a, const Tensor& b) {
  RequireSameShape("minimum", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(a.data()[i], b.data()[i]);
  }
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool take_a = pa.data[i] <= pb.data[i];
      Node& target = take_a ? pa : pb;
      if (target.requires_grad) target.GradBuffer()[i] += self.grad[i];
    }
  });
}

Tensor Maximum(const Tensor& a, const Tensor& b) {
  RequireSameShape("maximum", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(a.data()[i], b.data()[i]);
  }
  return MakeResult(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool take_a = pa.data[i] >= pb.data[i];
      Node& target = take_a ? pa : pb;
      if (target.requires_grad) target.GradBuffer()[i] += self.grad[i];
    }
  });
}

Tensor AddBias(const Tensor& x, const Tensor& bias) {
  const std::size_t c = x.cols();
  if (bias.numel() != c) {
    throw ShapeError("add_bias: bias " + ShapeToString(bias.shape()) +
                     " does not match rows of " + ShapeToString(x.shape()));
  }
  const std::size_t r = x.rows();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = x.data()[i * c + j] + bias.data()[j];
    }
  }
  return MakeResult(x.shape(), std::move(out), {x, bias}, [r, c](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.GradBuffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.GradBuffer();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
      }
    }
  });
}

Tensor Scale(const Tensor& x, double factor) {
  return Unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor AddScalar(const Tensor& x, double value) {
  return Unary(
      x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& x) {
  return Unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor Log(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Tensor Abs(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::abs(v); },
      [](double in, double) {
        return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0);
      });
}

Tensor ClampMin(const Tensor& x, double floor) {
  return Unary(
      x, [floor](double v) { return v < floor ? floor : v; },
      [floor](double in, double) { return in < floor ? 0.0 : 1.0; });
}

namespace {

Tensor SoftmaxImpl(const Tensor& x, const Mask* allowed) {
  const std::size_t r = x.rows(), c = x.cols();
  if (allowed && allowed->size() != x.numel()) {
    throw ShapeError("softmax: mask has " + std::to_string(allowed->size()) +
                     " entries for input " + ShapeToString(x.shape()));
  }
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double* dst = out.data() + i * c;
    bool any = false;
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const bool keep = !allowed || (*allowed)[i * c + j];
      any |= keep;
      dst[j] = keep ? row[j] : row[j] + kMaskedLogit;
      max = std::max(max, dst[j]);
    }
    if (!any) {
      throw Error("softmax: row " + std::to_string(i) +
                  " is fully masked (no valid attention targets)");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dst[j] = std::exp(dst[j] - max);
      total += dst[j];
    }
    for (std::size_t j = 0; j < c; ++j) dst[j] /= total;
  }
  return MakeResult(x.shape(), std::move(out), {x}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.GradBuffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.data.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

}  // namespace

Tensor Softmax(const Tensor& x) { return SoftmaxImpl(x, nullptr); }

Tensor MaskedSoftmax(const Tensor& x, const Mask& allowed) {
  return SoftmaxImpl(x, &allowed);
}

Tensor LayerNorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  const std::size_t r = x.rows(), d = x.cols();
  if (d < 2) throw ShapeError("layer_norm: need at least 2 features per row");
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain " + ShapeToString(gain.shape()) +
                     " / bias " + ShapeToString(bias.shape()) +
                     " do not match input " + ShapeToString(x.shape()));
  }
  std::vector<double> out(x.numel());
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(r);
  const auto in = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * inv_std[i];
      normalized[i * d + j] = xh;
      out[i * d + j] = xh * gain.data()[j] + bias.data()[j];
    }
  }
  return MakeResult(
      x.shape(), std::move(out), {x, gain, bias},
      [r, d, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        if (pg.requires_grad) {
          auto& g = pg.GradBuffer();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              g[j] += self.grad[i * d + j] * normalized[i * d + j];
            }
          }
        }
        if (pb.requires_grad) {
          auto& g = pb.GradBuffer();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
          }
        }
        if (px.requires_grad) {
          auto& g = px.GradBuffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = self.grad[i * d + j] * pg.data[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normalized[i * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = self.grad[i * d + j] * pg.data[j];
              g[i * d + j] += inv_std[i] * (dxh - mean_dxh -
                                            normalized[i * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor ConcatCols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != r) {
      throw ShapeError("concat: row count mismatch " +
                       ShapeToString(parts[0].shape()) + " vs " +
                       ShapeToString(t.shape()));
    }
    widths.push_back(t.cols());
    total += t.cols();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t c = t.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(t.data().data() + i * c, c, out.data() + i * total + offset);
    }
    offset += c;
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  return MakeResultN(std::move(shape), std::move(out), parts,
                     [r, total, widths = std::move(widths)](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         Node& p = *self.parents[k];
                         const std::size_t c = widths[k];
                         if (p.requires_grad) {
                           auto& g = p.GradBuffer();
                           for (std::size_t i = 0; i < r; ++i) {
                             for (std::size_t j = 0; j < c; ++j) {
                               g[i * c + j] += self.grad[i * total + offset + j];
                             }
                           }
                         }
                         offset += c;
                       }
                     });
}

Tensor SliceCols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t r = x.rows(), c = x.cols();
  if (begin >= end || end > c) {
    throw ShapeError("slice: columns [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " +
                     ShapeToString(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(x.data().data() + i * c + begin, w, out.data() + i * w);
  }
  Shape shape = x.shape();
  shape.back() = w;
  return MakeResult(std::move(shape), std::move(out), {x},
                    [r, c, w, begin](Node& self) {
                      auto& g = self.parents[0]->GradBuffer();
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < w; ++j) {
                          g[i * c + begin + j] += self.grad[i * w + j];
                        }
                      }
                    });
}

Tensor GatherRows(const Tensor& x, std::span<const std::size_t> indices) {
  RequireRank2("gather", x);
  if (indices.empty()) throw ShapeError("gather: empty index list");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= r) {
      throw ShapeError("gather: row " + std::to_string(indices[i]) +
                       " out of range for " + ShapeToString(x.shape()));
    }
    std::copy_n(x.data().data() + indices[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Shape shape{idx.size(), c};
  return MakeResult(std::move(shape), std::move(out), {x},
                    [c, idx = std::move(idx)](Node& self) {
                      auto& g = self.parents[0]->GradBuffer();
                      for (std::size_t i = 0; i < idx.size(); ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                          g[idx[i] * c + j] += self.grad[i * c + j];
                        }
                      }
                    });
}

Tensor Sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return MakeResult({1}, {total}, {x}, [](Node& self) {
    auto& g = self.parents[0]->GradBuffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor Mean(const Tensor& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor RowSum(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i] += x.data()[i * c + j];
  }
  return MakeResult({r, 1}, std::move(out), {x}, [r, c](Node& self) {
    auto& g = self.parents[0]->GradBuffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i];
    }
  });
}

Tensor Dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error("dropout rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  for (double& f : factor) f = rng.Uniform() < p ? 0.0 : keep_scale;
  return Mul(x, Tensor::FromData(x.shape(), std::move(factor)));
}

Tensor& ParameterSet::Add(std::string name, Tensor tensor) {
  if (!tensor.defined() || !tensor.requires_grad()) {
    throw Error("parameter '" + name + "' must require a gradient");
  }
  if (index_.contains(name)) {
    throw Error("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

const Tensor& ParameterSet::Get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw Error("unknown parameter '" + std::string(name) + "'");
  }
  return entries_[it->second].second;
}

Tensor& ParameterSet::Get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).Get(name));
}

bool ParameterSet::Contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto& [name, t] : entries_) t.ZeroGrad();
}

const ParameterGradError& FiniteDiffReport::Worst() const {
  if (per_parameter.empty()) throw Error("empty finite-difference report");
  return *std::max_element(per_parameter.begin(), per_parameter.end(),
                           [](const auto& a, const auto& b) {
                             return a.max_rel_error < b.max_rel_error;
                           });
}

FiniteDiffReport FiniteDiffCheck(
    const std::function<Tensor(ParameterSet&)>& loss, ParameterSet& params,
    double h) {
  if (!(h > 0.0)) throw Error("finite difference step must be positive");
  params.ZeroGrad();
  Tensor value = loss(params);
  if (!std::isfinite(value.item())) {
    throw NumericError("finite_diff_check: loss is not finite");
  }
  Backward(value);

  auto evaluate = [&]() {
    NoGradGuard no_grad;
    const double v = loss(params).item();
    if (!std::isfinite(v)) {
      throw NumericError("finite_diff_check: perturbed loss is not finite");
    }
    return v;
  };

  FiniteDiffReport report;
  for (auto& [name, tensor] : params) {
    ParameterGradError entry;
    entry.name = name;
    auto data = tensor.mutable_data();
    const auto grad = tensor.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = evaluate();
      data[i] = saved - h;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (i == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.per_parameter.push_back(std::move(entry));
  }
  return report;
}

}  // namespace densevg
