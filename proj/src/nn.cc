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

#include "mlpool/nn.h"

#include <Eigen/Dense>
#include <cmath>

#include "mlpool/errors.h"
#include "mlpool/ops.h"

namespace mlpool {

namespace {

Tensor UniformLeaf(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ShapeSize(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::FromVector(std::move(shape), std::move(v), true);
}

// Kaiming-uniform for ReLU stacks: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
Tensor KaimingUniform(std::size_t out, std::size_t fan_in, Rng& rng) {
  return UniformLeaf({out, fan_in}, std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

// Random orthogonal n x n matrix (Q of a Gaussian matrix, sign-fixed by R).
Eigen::MatrixXd RandomOrthogonal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

LstmDirection InitDirection(std::size_t in_dim, std::size_t hidden, Rng& rng) {
  LstmDirection dir;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  dir.w_ih = UniformLeaf({4 * hidden, in_dim}, bound, rng);
  std::vector<double> w_hh(4 * hidden * hidden);
  for (std::size_t gate = 0; gate < 4; ++gate) {
    Eigen::MatrixXd q = RandomOrthogonal(hidden, rng);
    for (std::size_t i = 0; i < hidden; ++i) {
      for (std::size_t j = 0; j < hidden; ++j) {
        w_hh[(gate * hidden + i) * hidden + j] = q(i, j);
      }
    }
  }
  dir.w_hh = Tensor::FromVector({4 * hidden, hidden}, std::move(w_hh), true);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;  // forget gate
  dir.bias = Tensor::FromVector({4 * hidden}, std::move(bias), true);
  return dir;
}

}  // namespace

SequenceBatch SequenceBatch::Single(const Tensor& frames) {
  if (frames.rank() != 2) {
    throw DimensionError("expected a [frames x dim] matrix, got " + ShapeToString(frames.shape()));
  }
  return SequenceBatch{frames, 1, frames.dim(0)};
}

Dense::Dense(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight_(KaimingUniform(out_dim, in_dim, rng)),
      bias_(Tensor::Zeros({out_dim}, true)) {}

Tensor Dense::Forward(const Tensor& x) const {
  return AddRow(MatMul(x, Transpose(weight_)), bias_);
}

void Dense::Collect(const std::string& prefix, std::vector<NamedTensor>* params) const {
  params->push_back({prefix + ".weight", weight_});
  params->push_back({prefix + ".bias", bias_});
}

TdnnLayer::TdnnLayer(std::size_t in_dim, std::size_t out_dim, std::size_t window,
                     std::size_t dilation, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim), window_(window), dilation_(dilation) {
  if (window == 0 || dilation == 0) {
    throw ConfigError("tdnn window and dilation must be >= 1");
  }
  weight_ = KaimingUniform(out_dim, in_dim * window, rng);
  bias_ = Tensor::Zeros({out_dim}, true);
}

std::size_t TdnnLayer::OutputLength(std::size_t input_length) const {
  if (input_length <= Context()) {
    throw DegenerateInputError("tdnn (window " + std::to_string(window_) + ", dilation " +
                               std::to_string(dilation_) + ") needs at least " +
                               std::to_string(Context() + 1) + " frames, got " +
                               std::to_string(input_length));
  }
  return input_length - Context();
}

SequenceBatch TdnnLayer::Forward(const SequenceBatch& x) const {
  if (x.dim() != in_dim_) {
    throw DimensionError("tdnn expects input dim " + std::to_string(in_dim_) + ", got " +
                         std::to_string(x.dim()));
  }
  const std::size_t out_len = OutputLength(x.length);
  std::vector<Tensor> taps;
  taps.reserve(window_);
  for (std::size_t k = 0; k < window_; ++k) {
    std::vector<std::size_t> rows;
    rows.reserve(x.count * out_len);
    for (std::size_t s = 0; s < x.count; ++s) {
      for (std::size_t t = 0; t < out_len; ++t) {
        rows.push_back(s * x.length + t + k * dilation_);
      }
    }
    taps.push_back(GatherRows(x.frames, std::move(rows)));
  }
  Tensor spliced = window_ == 1 ? taps[0] : Concat(taps, 1);
  Tensor out = AddRow(MatMul(spliced, Transpose(weight_)), bias_);
  return SequenceBatch{out, x.count, out_len};
}

Tensor TdnnLayer::Forward(const Tensor& x) const {
  return Forward(SequenceBatch::Single(x)).frames;
}

void TdnnLayer::Collect(const std::string& prefix, std::vector<NamedTensor>* params) const {
  params->push_back({prefix + ".weight", weight_});
  params->push_back({prefix + ".bias", bias_});
}

BatchNorm::BatchNorm(std::size_t dim, double momentum, double epsilon)
    : gamma_(Tensor::Full({dim}, 1.0, true)),
      beta_(Tensor::Zeros({dim}, true)),
      running_mean_(Tensor::Zeros({dim})),
      running_var_(Tensor::Full({dim}, 1.0)),
      momentum_(momentum),
      epsilon_(epsilon) {}

Tensor BatchNorm::Forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != dim()) {
    throw DimensionError("batchnorm(" + std::to_string(dim()) + ") got input " +
                         ShapeToString(x.shape()));
  }
  if (training_) {
    Tensor mean = Mean(x, 0);
    Tensor var = Var(x, 0);
    Tensor inv_std = Reciprocal(Sqrt(AddScalar(var, epsilon_)));
    Tensor normalized = MulRow(AddRow(x, Scale(mean, -1.0)), inv_std);
    auto rm = running_mean_.mutable_values();
    auto rv = running_var_.mutable_values();
    for (std::size_t i = 0; i < rm.size(); ++i) {
      rm[i] = (1.0 - momentum_) * rm[i] + momentum_ * mean.values()[i];
      rv[i] = (1.0 - momentum_) * rv[i] + momentum_ * var.values()[i];
    }
    return AddRow(MulRow(normalized, gamma_), beta_);
  }
  std::vector<double> shift(dim()), inv(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    shift[i] = -running_mean_.values()[i];
    inv[i] = 1.0 / std::sqrt(running_var_.values()[i] + epsilon_);
  }
  Tensor normalized = MulRow(AddRow(x, Tensor::FromVector({dim()}, std::move(shift))),
                             Tensor::FromVector({dim()}, std::move(inv)));
  return AddRow(MulRow(normalized, gamma_), beta_);
}

void BatchNorm::Collect(const std::string& prefix, std::vector<NamedTensor>* params) const {
  params->push_back({prefix + ".gamma", gamma_});
  params->push_back({prefix + ".beta", beta_});
}

void BatchNorm::CollectBuffers(const std::string& prefix,
                               std::vector<NamedTensor>* buffers) const {
  buffers->push_back({prefix + ".running_mean", running_mean_});
  buffers->push_back({prefix + ".running_var", running_var_});
}

BlstmLayer::BlstmLayer(std::size_t in_dim, std::size_t hidden, Rng& rng)
    : in_dim_(in_dim), hidden_(hidden) {
  if (hidden == 0) throw ConfigError("lstm hidden width must be positive");
  fwd_ = InitDirection(in_dim, hidden, rng);
  bwd_ = InitDirection(in_dim, hidden, rng);
}

Tensor BlstmLayer::RunDirection(const LstmDirection& dir, const SequenceBatch& x,
                                bool reverse) const {
  const std::size_t h = hidden_, n = x.count, len = x.length;
  // Input projections for every frame at once; the recurrence adds h W_hh^T.
  Tensor projected = AddRow(MatMul(x.frames, Transpose(dir.w_ih)), dir.bias);
  Tensor w_hh_t = Transpose(dir.w_hh);
  Tensor state, hidden;
  std::vector<Tensor> outputs(len);
  std::vector<std::size_t> rows(n);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    for (std::size_t s = 0; s < n; ++s) rows[s] = s * len + t;
    Tensor recurrent = hidden.defined() ? MatMul(hidden, w_hh_t) : Tensor();
    state = LstmCell(projected, rows, recurrent, state);
    hidden = SliceCols(state, 0, h);
    outputs[t] = hidden;
  }
  // Rows are ordered (t, s) after concatenation; restore (s, t).
  Tensor stacked = len == 1 ? outputs[0] : Concat(outputs, 0);
  if (n == 1) return stacked;
  std::vector<std::size_t> order(n * len);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < len; ++t) order[s * len + t] = t * n + s;
  }
  return GatherRows(stacked, std::move(order));
}

SequenceBatch BlstmLayer::Forward(const SequenceBatch& x) const {
  if (x.dim() != in_dim_) {
    throw DimensionError("blstm expects input dim " + std::to_string(in_dim_) + ", got " +
                         std::to_string(x.dim()));
  }
  if (x.length == 0 || x.count == 0) throw DegenerateInputError("blstm on empty sequence");
  Tensor both[2] = {RunDirection(fwd_, x, false), RunDirection(bwd_, x, true)};
  return SequenceBatch{Concat(both, 1), x.count, x.length};
}

Tensor BlstmLayer::Forward(const Tensor& x) const {
  return Forward(SequenceBatch::Single(x)).frames;
}

void BlstmLayer::Collect(const std::string& prefix, std::vector<NamedTensor>* params) const {
  for (const auto& [name, dir] : {std::pair{"forward", &fwd_}, std::pair{"backward", &bwd_}}) {
    const std::string p = prefix + "." + name;
    params->push_back({p + ".w_ih", dir->w_ih});
    params->push_back({p + ".w_hh", dir->w_hh});
    params->push_back({p + ".bias", dir->bias});
  }
}

Tensor StatsPool(const SequenceBatch& x) {
  if (x.count == 0 || x.length == 0) {
    throw DegenerateInputError("statistics pooling over zero frames");
  }
  const std::size_t d = x.dim();
  Tensor cube = Reshape(x.frames, {x.count, x.length, d});
  Tensor parts[2] = {Mean(cube, 1), Sqrt(AddScalar(Var(cube, 1), kStdPoolEpsilon))};
  return Concat(parts, 1);
}

Tensor StatsPool(const Tensor& x) {
  Tensor pooled = StatsPool(SequenceBatch::Single(x));
  return Reshape(pooled, {pooled.dim(1)});
}

PoolingHead::PoolingHead(std::size_t in_dim, std::size_t hidden, std::size_t width, Rng& rng)
    : fc1_(in_dim, hidden, rng), fc2_(hidden, width, rng), bn1_(hidden), bn2_(width) {}

SequenceBatch PoolingHead::Frames(const SequenceBatch& x) {
  Tensor h = bn1_.Forward(Relu(fc1_.Forward(x.frames)));
  h = bn2_.Forward(Relu(fc2_.Forward(h)));
  return SequenceBatch{h, x.count, x.length};
}

Tensor PoolingHead::Forward(const SequenceBatch& x) { return StatsPool(Frames(x)); }

Tensor PoolingHead::Forward(const Tensor& x) {
  Tensor pooled = Forward(SequenceBatch::Single(x));
  return Reshape(pooled, {pooled.dim(1)});
}

void PoolingHead::set_training(bool training) {
  bn1_.set_training(training);
  bn2_.set_training(training);
}

void PoolingHead::Collect(const std::string& prefix, std::vector<NamedTensor>* params) const {
  fc1_.Collect(prefix + ".fc1", params);
  bn1_.Collect(prefix + ".bn1", params);
  fc2_.Collect(prefix + ".fc2", params);
  bn2_.Collect(prefix + ".bn2", params);
}

void PoolingHead::CollectBuffers(const std::string& prefix,
                                 std::vector<NamedTensor>* buffers) const {
  bn1_.CollectBuffers(prefix + ".bn1", buffers);
  bn2_.CollectBuffers(prefix + ".bn2", buffers);
}

}  // namespace mlpool
