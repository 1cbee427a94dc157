// Copyright (c) 2026 The mlpool Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mlpool/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mlpool/errors.h"

namespace mlpool {

namespace {

using internal::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kNormEpsilon = 1e-12;

Tensor MakeOp(const char* op, Shape shape, std::vector<double> value,
              std::vector<const Tensor*> inputs, std::function<void(Node&)> backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  if (any && GradEnabled()) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of input |i|, or nullptr when it takes no gradient.
std::vector<double>* GradOf(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.EnsureGrad() : nullptr;
}

void RequireMatrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         (t.defined() ? ShapeToString(t.shape()) : std::string("<undefined>")));
  }
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor Binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + ShapeToString(a.shape()) +
                         " and " + ShapeToString(b.shape()));
  }
  const Shape out_shape = same ? a.shape() : (a_scalar ? b.shape() : a.shape());
  const std::size_t n = ShapeSize(out_shape);
  const std::size_t a_step = (a.size() == n) ? 1 : 0;
  const std::size_t b_step = (b.size() == n) ? 1 : 0;
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[i * a_step], y = bv[i * b_step];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
    }
  }
  return MakeOp(op, out_shape, std::move(out), {&a, &b},
                [kind, n, a_step, b_step](Node& self) {
                  const auto& x = self.inputs[0]->value;
                  const auto& y = self.inputs[1]->value;
                  if (auto* ga = GradOf(self, 0)) {
                    for (std::size_t i = 0; i < n; ++i) {
                      double g = self.grad[i];
                      (*ga)[i * a_step] += kind == BinaryKind::kMul ? g * y[i * b_step] : g;
                    }
                  }
                  if (auto* gb = GradOf(self, 1)) {
                    for (std::size_t i = 0; i < n; ++i) {
                      double g = self.grad[i];
                      double d = kind == BinaryKind::kAdd   ? g
                                 : kind == BinaryKind::kSub ? -g
                                                            : g * x[i * a_step];
                      (*gb)[i * b_step] += d;
                    }
                  }
                });
}

// Pointwise op; |derivative| maps (input, output) to d output / d input.
template <typename F, typename D>
Tensor Unary(const Tensor& a, const char* op, F forward, D derivative) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = forward(av[i]);
  return MakeOp(op, a.shape(), std::move(out), {&a}, [derivative](Node& self) {
    auto* ga = GradOf(self, 0);
    if (!ga) return;
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      (*ga)[i] += self.grad[i] * derivative(x[i], self.value[i]);
    }
  });
}

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
  Shape reduced;
};

AxisLayout SplitAxis(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + ShapeToString(a.shape()));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i < axis) l.outer *= a.shape()[i];
    else if (i > axis) l.inner *= a.shape()[i];
    if (i != axis) l.reduced.push_back(a.shape()[i]);
  }
  l.extent = a.shape()[axis];
  if (l.extent == 0) {
    throw DegenerateInputError(std::string(op) + ": empty reduction axis");
  }
  return l;
}

enum class ReduceKind { kSum, kMean, kVar };

Tensor Reduce(const Tensor& a, std::size_t axis, ReduceKind kind, const char* op) {
  const AxisLayout l = SplitAxis(a, axis, op);
  auto av = a.values();
  const double count = static_cast<double>(l.extent);
  std::vector<double> out(l.outer * l.inner, 0.0);
  std::vector<double> means(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t k = 0; k < l.extent; ++k) {
      const double* row = &av[(o * l.extent + k) * l.inner];
      double* acc = &means[o * l.inner];
      for (std::size_t i = 0; i < l.inner; ++i) acc[i] += row[i];
    }
  }
  if (kind == ReduceKind::kSum) {
    out = means;
  } else {
    for (double& m : means) m /= count;
    if (kind == ReduceKind::kMean) {
      out = means;
    } else {
      // Two-pass population variance on values shifted by the first element
      // along the axis, so constant input gives exactly zero.
      for (std::size_t o = 0; o < l.outer; ++o) {
        const double* pivot = &av[o * l.extent * l.inner];
        std::vector<double> shifted_mean(l.inner, 0.0);
        for (std::size_t k = 0; k < l.extent; ++k) {
          const double* row = &av[(o * l.extent + k) * l.inner];
          for (std::size_t i = 0; i < l.inner; ++i) shifted_mean[i] += row[i] - pivot[i];
        }
        for (double& m : shifted_mean) m /= count;
        double* acc = &out[o * l.inner];
        for (std::size_t k = 0; k < l.extent; ++k) {
          const double* row = &av[(o * l.extent + k) * l.inner];
          for (std::size_t i = 0; i < l.inner; ++i) {
            const double d = (row[i] - pivot[i]) - shifted_mean[i];
            acc[i] += d * d;
          }
        }
      }
      for (double& v : out) v /= count;
    }
  }
  return MakeOp(op, l.reduced, std::move(out), {&a},
                [l, kind, count, means = std::move(means)](Node& self) {
                  auto* ga = GradOf(self, 0);
                  if (!ga) return;
                  const auto& x = self.inputs[0]->value;
                  for (std::size_t o = 0; o < l.outer; ++o) {
                    for (std::size_t k = 0; k < l.extent; ++k) {
                      const std::size_t base = (o * l.extent + k) * l.inner;
                      for (std::size_t i = 0; i < l.inner; ++i) {
                        const double g = self.grad[o * l.inner + i];
                        double d = g;
                        if (kind == ReduceKind::kMean) d = g / count;
                        if (kind == ReduceKind::kVar) {
                          d = g * 2.0 * (x[base + i] - means[o * l.inner + i]) / count;
                        }
                        (*ga)[base + i] += d;
                      }
                    }
                  }
                });
}

}  // namespace

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul");
  RequireMatrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + ShapeToString(a.shape()) +
                         " x " + ShapeToString(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return MakeOp("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    ConstMap dc(self.grad.data(), m, n);
    if (auto* ga = GradOf(self, 0)) {
      MutMap(ga->data(), m, k).noalias() +=
          dc * ConstMap(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto* gb = GradOf(self, 1)) {
      MutMap(gb->data(), k, n).noalias() +=
          ConstMap(self.inputs[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor Transpose(const Tensor& a) {
  RequireMatrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  MutMap(out.data(), c, r) = ConstMap(a.values().data(), r, c).transpose();
  return MakeOp("transpose", {c, r}, std::move(out), {&a}, [r, c](Node& self) {
    if (auto* ga = GradOf(self, 0)) {
      MutMap(ga->data(), r, c) += ConstMap(self.grad.data(), c, r).transpose();
    }
  });
}

Tensor Add(const Tensor& a, const Tensor& b) { return Binary(a, b, BinaryKind::kAdd, "add"); }
Tensor Sub(const Tensor& a, const Tensor& b) { return Binary(a, b, BinaryKind::kSub, "sub"); }
Tensor Mul(const Tensor& a, const Tensor& b) { return Binary(a, b, BinaryKind::kMul, "mul"); }

Tensor Scale(const Tensor& a, double factor) {
  return Unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor AddScalar(const Tensor& a, double offset) {
  return Unary(
      a, "add_scalar", [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor Relu(const Tensor& a) {
  return Unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Tanh(const Tensor& a) {
  return Unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor Sigmoid(const Tensor& a) {
  return Unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw NumericError("sqrt of negative value");
  }
  return Unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor Reciprocal(const Tensor& a) {
  return Unary(
      a, "reciprocal", [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

Tensor Sum(const Tensor& a, std::size_t axis) { return Reduce(a, axis, ReduceKind::kSum, "sum"); }
Tensor Mean(const Tensor& a, std::size_t axis) {
  return Reduce(a, axis, ReduceKind::kMean, "mean");
}
Tensor Var(const Tensor& a, std::size_t axis) { return Reduce(a, axis, ReduceKind::kVar, "var"); }

Tensor SumAll(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return MakeOp("sum_all", {}, {s}, {&a}, [](Node& self) {
    if (auto* ga = GradOf(self, 0)) {
      for (double& g : *ga) g += self.grad[0];
    }
  });
}

Tensor Concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DegenerateInputError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         ShapeToString(first));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + ShapeToString(s) + " does not match " +
                           ShapeToString(first) + " off axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(&v[o * block], block, &out[(o * total + offset) * inner]);
    }
    offset += extents[p];
  }
  std::vector<const Tensor*> inputs;
  for (const Tensor& p : parts) inputs.push_back(&p);
  return MakeOp("concat", out_shape, std::move(out), inputs,
                [outer, inner, total, extents](Node& self) {
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < extents.size(); ++p) {
                    const std::size_t block = extents[p] * inner;
                    if (auto* gp = GradOf(self, p)) {
                      for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = &self.grad[(o * total + off) * inner];
                        double* dst = &(*gp)[o * block];
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                    }
                    off += extents[p];
                  }
                });
}

Tensor Reshape(const Tensor& a, Shape shape) {
  if (ShapeSize(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + ShapeToString(a.shape()) + " as " +
                         ShapeToString(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return MakeOp("reshape", std::move(shape), std::move(out), {&a}, [](Node& self) {
    if (auto* ga = GradOf(self, 0)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    }
  });
}

Tensor L2Norm(const Tensor& a) {
  if (a.rank() != 1) {
    throw DimensionError("l2norm expects a vector, got " + ShapeToString(a.shape()));
  }
  double ss = 0.0;
  for (double v : a.values()) ss += v * v;
  return MakeOp("l2norm", {}, {std::sqrt(ss)}, {&a}, [](Node& self) {
    if (auto* ga = GradOf(self, 0)) {
      const auto& x = self.inputs[0]->value;
      const double scale = self.grad[0] / (self.value[0] + kNormEpsilon);
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += scale * x[i];
    }
  });
}

Tensor RowNorms(const Tensor& a) {
  RequireMatrix(a, "row_norms");
  const std::size_t m = a.dim(0), d = a.dim(1);
  auto v = a.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += v[r * d + c] * v[r * d + c];
    out[r] = std::sqrt(ss);
  }
  return MakeOp("row_norms", {m}, std::move(out), {&a}, [m, d](Node& self) {
    if (auto* ga = GradOf(self, 0)) {
      const auto& x = self.inputs[0]->value;
      for (std::size_t r = 0; r < m; ++r) {
        const double scale = self.grad[r] / (self.value[r] + kNormEpsilon);
        for (std::size_t c = 0; c < d; ++c) (*ga)[r * d + c] += scale * x[r * d + c];
      }
    }
  });
}

Tensor AddRow(const Tensor& matrix, const Tensor& row) {
  RequireMatrix(matrix, "add_row");
  const std::size_t m = matrix.dim(0), d = matrix.dim(1);
  if (row.rank() != 1 || row.dim(0) != d) {
    throw DimensionError("add_row: row " + ShapeToString(row.shape()) + " vs matrix " +
                         ShapeToString(matrix.shape()));
  }
  std::vector<double> out(matrix.values().begin(), matrix.values().end());
  auto rv = row.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += rv[c];
  }
  return MakeOp("add_row", {m, d}, std::move(out), {&matrix, &row}, [m, d](Node& self) {
    if (auto* gm = GradOf(self, 0)) {
      for (std::size_t i = 0; i < m * d; ++i) (*gm)[i] += self.grad[i];
    }
    if (auto* gr = GradOf(self, 1)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < d; ++c) (*gr)[c] += self.grad[r * d + c];
      }
    }
  });
}

Tensor MulRow(const Tensor& matrix, const Tensor& row) {
  RequireMatrix(matrix, "mul_row");
  const std::size_t m = matrix.dim(0), d = matrix.dim(1);
  if (row.rank() != 1 || row.dim(0) != d) {
    throw DimensionError("mul_row: row " + ShapeToString(row.shape()) + " vs matrix " +
                         ShapeToString(matrix.shape()));
  }
  std::vector<double> out(matrix.values().begin(), matrix.values().end());
  auto rv = row.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= rv[c];
  }
  return MakeOp("mul_row", {m, d}, std::move(out), {&matrix, &row}, [m, d](Node& self) {
    const auto& x = self.inputs[0]->value;
    const auto& w = self.inputs[1]->value;
    if (auto* gm = GradOf(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < d; ++c) (*gm)[r * d + c] += self.grad[r * d + c] * w[c];
      }
    }
    if (auto* gr = GradOf(self, 1)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < d; ++c) (*gr)[c] += self.grad[r * d + c] * x[r * d + c];
      }
    }
  });
}

Tensor SliceCols(const Tensor& matrix, std::size_t begin, std::size_t end) {
  RequireMatrix(matrix, "slice_cols");
  const std::size_t m = matrix.dim(0), d = matrix.dim(1);
  if (begin >= end || end > d) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + ShapeToString(matrix.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto v = matrix.values();
  for (std::size_t r = 0; r < m; ++r) std::copy_n(&v[r * d + begin], w, &out[r * w]);
  return MakeOp("slice_cols", {m, w}, std::move(out), {&matrix}, [m, d, w, begin](Node& self) {
    if (auto* gm = GradOf(self, 0)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < w; ++c) (*gm)[r * d + begin + c] += self.grad[r * w + c];
      }
    }
  });
}

Tensor GatherRows(const Tensor& matrix, std::vector<std::size_t> indices) {
  RequireMatrix(matrix, "gather_rows");
  if (indices.empty()) throw DegenerateInputError("gather_rows: no indices");
  const std::size_t rows = matrix.dim(0), d = matrix.dim(1);
  std::vector<double> out(indices.size() * d);
  auto v = matrix.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + ShapeToString(matrix.shape()));
    }
    std::copy_n(&v[indices[i] * d], d, &out[i * d]);
  }
  const std::size_t n = indices.size();
  return MakeOp("gather_rows", {n, d}, std::move(out), {&matrix},
                [d, indices = std::move(indices)](Node& self) {
                  if (auto* gm = GradOf(self, 0)) {
                    for (std::size_t i = 0; i < indices.size(); ++i) {
                      double* dst = &(*gm)[indices[i] * d];
                      const double* src = &self.grad[i * d];
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  }
                });
}

Tensor LstmCell(const Tensor& inputs, std::span<const std::size_t> rows, const Tensor& recurrent,
                const Tensor& state) {
  RequireMatrix(inputs, "lstm_cell");
  if (inputs.dim(1) % 4 != 0 || inputs.dim(1) == 0) {
    throw DimensionError("lstm_cell: gate width " + std::to_string(inputs.dim(1)) +
                         " is not a positive multiple of 4");
  }
  const std::size_t h = inputs.dim(1) / 4, n = rows.size();
  if (n == 0) throw DegenerateInputError("lstm_cell: no rows");
  for (std::size_t r : rows) {
    if (r >= inputs.dim(0)) {
      throw DimensionError("lstm_cell: row " + std::to_string(r) + " out of range for " +
                           ShapeToString(inputs.shape()));
    }
  }
  const bool has_rec = recurrent.defined(), has_state = state.defined();
  if (has_rec && recurrent.shape() != Shape{n, 4 * h}) {
    throw DimensionError("lstm_cell: recurrent term " + ShapeToString(recurrent.shape()) +
                         ", expected [" + std::to_string(n) + " x " + std::to_string(4 * h) + "]");
  }
  if (has_state && state.shape() != Shape{n, 2 * h}) {
    throw DimensionError("lstm_cell: state " + ShapeToString(state.shape()) + ", expected [" +
                         std::to_string(n) + " x " + std::to_string(2 * h) + "]");
  }
  auto sigmoid = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  // Activated gates of row s, recomputed in backward rather than stored.
  std::vector<std::size_t> row_ids(rows.begin(), rows.end());
  auto activate = [h, sigmoid](const double* in, const double* rec, double* act) {
    for (std::size_t j = 0; j < 4 * h; ++j) {
      const double pre = in[j] + (rec ? rec[j] : 0.0);
      act[j] = (j >= 2 * h && j < 3 * h) ? std::tanh(pre) : sigmoid(pre);
    }
  };
  auto iv = inputs.values();
  std::vector<double> out(n * 2 * h);
  std::vector<double> act(4 * h);
  for (std::size_t s = 0; s < n; ++s) {
    activate(&iv[row_ids[s] * 4 * h], has_rec ? &recurrent.values()[s * 4 * h] : nullptr,
             act.data());
    for (std::size_t j = 0; j < h; ++j) {
      const double prev = has_state ? state.values()[s * 2 * h + h + j] : 0.0;
      const double c = act[h + j] * prev + act[j] * act[2 * h + j];
      out[s * 2 * h + h + j] = c;
      out[s * 2 * h + j] = act[3 * h + j] * std::tanh(c);
    }
  }
  std::vector<const Tensor*> in_list = {&inputs};
  if (has_rec) in_list.push_back(&recurrent);
  if (has_state) in_list.push_back(&state);
  return MakeOp(
      "lstm_cell", {n, 2 * h}, std::move(out), in_list,
      [h, n, has_rec, has_state, row_ids = std::move(row_ids), activate](Node& self) {
        const std::size_t rec_i = 1, state_i = has_rec ? 2 : 1;
        const auto& x = self.inputs[0]->value;
        const double* rec = has_rec ? self.inputs[rec_i]->value.data() : nullptr;
        const double* prev = has_state ? self.inputs[state_i]->value.data() : nullptr;
        auto* g_in = GradOf(self, 0);
        auto* g_rec = has_rec ? GradOf(self, rec_i) : nullptr;
        auto* g_state = has_state ? GradOf(self, state_i) : nullptr;
        std::vector<double> act(4 * h), d_pre(4 * h);
        for (std::size_t s = 0; s < n; ++s) {
          activate(&x[row_ids[s] * 4 * h], rec ? rec + s * 4 * h : nullptr, act.data());
          const double* grad = &self.grad[s * 2 * h];
          for (std::size_t j = 0; j < h; ++j) {
            const double i = act[j], f = act[h + j], g = act[2 * h + j], o = act[3 * h + j];
            const double c_prev = prev ? prev[s * 2 * h + h + j] : 0.0;
            const double tc = std::tanh(self.value[s * 2 * h + h + j]);
            const double dh = grad[j];
            const double dc = grad[h + j] + dh * o * (1.0 - tc * tc);
            d_pre[j] = dc * g * i * (1.0 - i);
            d_pre[h + j] = dc * c_prev * f * (1.0 - f);
            d_pre[2 * h + j] = dc * i * (1.0 - g * g);
            d_pre[3 * h + j] = dh * tc * o * (1.0 - o);
            if (g_state) (*g_state)[s * 2 * h + h + j] += dc * f;
          }
          if (g_in) {
            double* dst = &(*g_in)[row_ids[s] * 4 * h];
            for (std::size_t j = 0; j < 4 * h; ++j) dst[j] += d_pre[j];
          }
          if (g_rec) {
            double* dst = &(*g_rec)[s * 4 * h];
            for (std::size_t j = 0; j < 4 * h; ++j) dst[j] += d_pre[j];
          }
        }
      });
}

Tensor SoftmaxCrossEntropy(const Tensor& logits, std::span<const std::size_t> labels) {
  RequireMatrix(logits, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(m) + " rows");
  }
  auto v = logits.values();
  std::vector<double> probs(m * n);
  std::vector<double> out(m);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  for (std::size_t r = 0; r < m; ++r) {
    if (lab[r] >= n) {
      throw ContractError("label " + std::to_string(lab[r]) + " out of range for " +
                          std::to_string(n) + " classes");
    }
    const double* row = &v[r * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    // Only differences from the row maximum enter, so a common offset on
    // the row cancels exactly whenever it is representable.
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < n; ++c) probs[r * n + c] = std::exp(row[c] - mx - log_z);
    out[r] = log_z - (row[lab[r]] - mx);
  }
  return MakeOp("softmax_cross_entropy", {m}, std::move(out), {&logits},
                [m, n, lab = std::move(lab), probs = std::move(probs)](Node& self) {
                  if (auto* g = GradOf(self, 0)) {
                    for (std::size_t r = 0; r < m; ++r) {
                      for (std::size_t c = 0; c < n; ++c) {
                        const double target = c == lab[r] ? 1.0 : 0.0;
                        (*g)[r * n + c] += self.grad[r] * (probs[r * n + c] - target);
                      }
                    }
                  }
                });
}

}  // namespace mlpool
