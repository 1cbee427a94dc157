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

#ifndef MLPOOL_NN_H_
#define MLPOOL_NN_H_

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mlpool/tensor.h"

namespace mlpool {

using Rng = std::mt19937_64;

// A batch of |count| equal-length frame sequences stacked row-wise: frame t
// of sequence s is row s * length + t of |frames|.
struct SequenceBatch {
  Tensor frames;
  std::size_t count = 0;
  std::size_t length = 0;

  std::size_t dim() const { return frames.dim(1); }
  static SequenceBatch Single(const Tensor& frames);
};

// Fully connected layer y = x W^T + b.
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Tensor Forward(const Tensor& x) const;  // [rows x in] -> [rows x out]
  void Collect(const std::string& prefix, std::vector<NamedTensor>* params) const;

  std::size_t in_dim() const { return weight_.dim(1); }
  std::size_t out_dim() const { return weight_.dim(0); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;  // [out x in]
  Tensor bias_;    // [out]
};

// Dilated "valid" temporal convolution. Output frame t is an affine map of
// input frames t, t + dilation, ..., t + (window - 1) * dilation.
class TdnnLayer {
 public:
  TdnnLayer() = default;
  TdnnLayer(std::size_t in_dim, std::size_t out_dim, std::size_t window,
            std::size_t dilation, Rng& rng);

  SequenceBatch Forward(const SequenceBatch& x) const;
  Tensor Forward(const Tensor& x) const;  // single [T x in] utterance

  std::size_t Context() const { return (window_ - 1) * dilation_; }
  std::size_t OutputLength(std::size_t input_length) const;
  void Collect(const std::string& prefix, std::vector<NamedTensor>* params) const;

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t window() const { return window_; }
  std::size_t dilation() const { return dilation_; }
  // [out x (in * window)]; input column block k multiplies frame t + k * dilation.
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  std::size_t in_dim_ = 0, out_dim_ = 0, window_ = 1, dilation_ = 1;
  Tensor weight_;
  Tensor bias_;
};

// Batch normalization over rows. Train mode normalizes with batch statistics
// and updates the running estimates; eval mode is a fixed affine map.
class BatchNorm {
 public:
  static constexpr double kDefaultMomentum = 0.1;
  static constexpr double kDefaultEpsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t dim, double momentum = kDefaultMomentum,
                     double epsilon = kDefaultEpsilon);

  Tensor Forward(const Tensor& x);
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  void Collect(const std::string& prefix, std::vector<NamedTensor>* params) const;
  void CollectBuffers(const std::string& prefix, std::vector<NamedTensor>* buffers) const;

  std::size_t dim() const { return gamma_.dim(0); }
  double epsilon() const { return epsilon_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  Tensor gamma_, beta_;
  Tensor running_mean_, running_var_;  // leaves without gradient
  double momentum_ = kDefaultMomentum;
  double epsilon_ = kDefaultEpsilon;
  bool training_ = true;
};

// Gate order within the 4h blocks: input, forget, cell candidate, output.
struct LstmDirection {
  Tensor w_ih;  // [4h x in]
  Tensor w_hh;  // [4h x h]
  Tensor bias;  // [4h]
};

// Bidirectional LSTM; the output frame is [forward_h ; backward_h].
class BlstmLayer {
 public:
  BlstmLayer() = default;
  BlstmLayer(std::size_t in_dim, std::size_t hidden, Rng& rng);

  SequenceBatch Forward(const SequenceBatch& x) const;
  Tensor Forward(const Tensor& x) const;

  void Collect(const std::string& prefix, std::vector<NamedTensor>* params) const;
  std::size_t in_dim() const { return in_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t out_dim() const { return 2 * hidden_; }
  LstmDirection& forward_direction() { return fwd_; }
  LstmDirection& backward_direction() { return bwd_; }

 private:
  Tensor RunDirection(const LstmDirection& dir, const SequenceBatch& x, bool reverse) const;

  std::size_t in_dim_ = 0, hidden_ = 0;
  LstmDirection fwd_, bwd_;
};

inline constexpr double kStdPoolEpsilon = 1e-10;

// Per-sequence [mean ; sqrt(population variance + 1e-10)] -> [count x 2d].
Tensor StatsPool(const SequenceBatch& x);
// Single sequence [T x d] -> [2d].
Tensor StatsPool(const Tensor& x);

// Two frame-level dense layers (each followed by ReLU and BatchNorm) and
// statistics pooling.
class PoolingHead {
 public:
  PoolingHead() = default;
  PoolingHead(std::size_t in_dim, std::size_t hidden, std::size_t width, Rng& rng);

  Tensor Forward(const SequenceBatch& x);  // -> [count x 2 * width]
  Tensor Forward(const Tensor& x);         // -> [2 * width]
  // Frame-level output before pooling.
  SequenceBatch Frames(const SequenceBatch& x);

  void set_training(bool training);
  void Collect(const std::string& prefix, std::vector<NamedTensor>* params) const;
  void CollectBuffers(const std::string& prefix, std::vector<NamedTensor>* buffers) const;
  std::size_t pooled_dim() const { return 2 * fc2_.out_dim(); }

  Dense& fc1() { return fc1_; }
  Dense& fc2() { return fc2_; }
  BatchNorm& bn1() { return bn1_; }
  BatchNorm& bn2() { return bn2_; }

 private:
  Dense fc1_, fc2_;
  BatchNorm bn1_, bn2_;
};

}  // namespace mlpool

#endif  // MLPOOL_NN_H_
