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

#ifndef MLPOOL_OPS_H_
#define MLPOOL_OPS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mlpool/tensor.h"

// Differentiable operations. Every op validates shapes (DimensionError),
// rejects non-finite results (NumericError naming the op) and records a
// backward rule when gradients are enabled and any input requires them.
namespace mlpool {

// [m x k] * [k x n] -> [m x n].
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& a);

// Binary ops accept equal shapes, or one operand holding a single value
// which is broadcast. Nothing else broadcasts implicitly.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double factor);
Tensor AddScalar(const Tensor& a, double offset);

Tensor Relu(const Tensor& a);
Tensor Tanh(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Sqrt(const Tensor& a);
Tensor Reciprocal(const Tensor& a);

// Reductions drop |axis|. Var is the population variance (divide by count).
Tensor Sum(const Tensor& a, std::size_t axis);
Tensor Mean(const Tensor& a, std::size_t axis);
Tensor Var(const Tensor& a, std::size_t axis);
Tensor SumAll(const Tensor& a);

Tensor Concat(std::span<const Tensor> parts, std::size_t axis);
Tensor Reshape(const Tensor& a, Shape shape);

// Euclidean norm of a vector; backward is z / (||z|| + 1e-12).
Tensor L2Norm(const Tensor& a);
// Per-row Euclidean norms of a matrix, same guard as L2Norm. [m x d] -> [m].
Tensor RowNorms(const Tensor& a);

// Explicit row broadcasts of a [d] vector over an [m x d] matrix.
Tensor AddRow(const Tensor& matrix, const Tensor& row);
Tensor MulRow(const Tensor& matrix, const Tensor& row);

// Columns [begin, end) of a matrix.
Tensor SliceCols(const Tensor& matrix, std::size_t begin, std::size_t end);
// Rows of a matrix in the given order (repeats allowed); backward
// scatter-adds.
Tensor GatherRows(const Tensor& matrix, std::vector<std::size_t> indices);

// One LSTM step for a batch of n sequences. Pre-activations are rows |rows|
// of |inputs| [m x 4h] (gate order i, f, g, o) plus |recurrent| [n x 4h];
// |state| is the previous result. Either of the last two may be undefined at
// the first step. Returns [n x 2h] = [hidden | cell].
Tensor LstmCell(const Tensor& inputs, std::span<const std::size_t> rows, const Tensor& recurrent,
                const Tensor& state);

// Per-row softmax cross-entropy, computed with max subtraction.
// [m x n] logits, m labels in [0, n) -> [m].
Tensor SoftmaxCrossEntropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace mlpool

#endif  // MLPOOL_OPS_H_
