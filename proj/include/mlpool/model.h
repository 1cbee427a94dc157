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

#ifndef MLPOOL_MODEL_H_
#define MLPOOL_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mlpool/nn.h"
#include "mlpool/tensor.h"

namespace mlpool {

struct TdnnSpec {
  std::size_t filters = 512;
  std::size_t window = 1;
  std::size_t dilation = 1;

  bool operator==(const TdnnSpec&) const = default;
};

// Declarative topology. The four named configurations differ in where
// statistics pooling taps the frame-level stack:
//
//   x-vector  TDNN1-TDNN2-TDNN3-P
//   A         TDNN1-P-TDNN2-P-TDNN3-P
//   B         TDNN1-TDNN2-TDNN3-LSTM-P
//   MP        TDNN1-TDNN2-TDNN3-P-LSTM-P
//
// Tap names are "tdnn1", "tdnn2", "tdnn3" and "lstm".
struct ModelConfig {
  std::string name = "x-vector";
  std::size_t input_dim = 43;
  std::vector<TdnnSpec> tdnn = {{512, 5, 1}, {512, 3, 2}, {512, 3, 3}};
  std::size_t lstm_hidden = 0;  // per direction; 0 when no LSTM layer
  std::vector<std::string> taps = {"tdnn3"};
  std::size_t head_hidden = 512;
  std::vector<std::size_t> head_widths = {1500};
  std::size_t embedding_dim = 256;
  std::size_t fc2_dim = 256;
  std::size_t num_speakers = 2;

  // Defaults for a named topology: x-vector 1500, A 3 x 500, B 1500,
  // MP 2 x 750 head widths (pooled dim 3000 for all); LSTM 512 per direction.
  static ModelConfig Preset(const std::string& name, std::size_t num_speakers);
  static const std::vector<std::string>& TopologyNames();

  // Throws ConfigError naming the offending layer or field.
  void Validate() const;
  bool HasLstm() const;
  std::size_t PooledDim() const;
  // Shortest utterance the TDNN stack accepts.
  std::size_t MinFrames() const;

  // Flat "key = value" text, one key per line; '#' starts a comment.
  //   name          x-vector | A | B | MP
  //   input_dim     integer
  //   tdnn          filters/window/dilation, comma separated (3 layers)
  //   lstm_hidden   integer (0 = none)
  //   taps          comma separated tap names
  //   head_hidden   integer
  //   head_widths   comma separated integers, one per tap
  //   embedding_dim, fc2_dim, num_speakers   integers
  std::string ToText() const;
  static ModelConfig FromText(const std::string& text);
  // Applies one "key=value" style override using the same grammar.
  void Set(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

struct Embedding {
  std::string utterance_id;
  std::vector<double> vector;
};

// Instantiated network. Frame level: TDNN blocks (affine, ReLU, BN) and an
// optional BLSTM after the last TDNN. Each tap feeds a PoolingHead; pooled
// outputs are concatenated and passed through
//   dense -> z (embedding) -> ReLU, BN -> dense -> x -> ReLU, BN -> dense -> logits.
class SpeakerNet {
 public:
  struct Output {
    Tensor logits;  // [count x N] (or [N] for a single utterance)
    Tensor z;       // embedding layer output, before ReLU and BN
    Tensor x;       // second utterance-level layer output
    Tensor pooled;  // concatenated statistics
  };

  SpeakerNet(const ModelConfig& config, std::uint64_t seed);

  Output Forward(const SequenceBatch& batch);
  Output Forward(const Tensor& features);  // single utterance [T x input_dim]

  // Embedding of the full utterance; requires eval mode and records no tape.
  Embedding ExtractEmbedding(const Tensor& features, const std::string& utterance_id);

  void SetTraining(bool training);
  bool training() const { return training_; }

  // Registry of trainable parameters in a stable order with unique names.
  std::vector<NamedTensor> Parameters() const;
  // BatchNorm running statistics.
  std::vector<NamedTensor> Buffers() const;

  const ModelConfig& config() const { return config_; }

  TdnnLayer& tdnn(std::size_t i) { return tdnn_[i]; }
  BatchNorm& tdnn_bn(std::size_t i) { return tdnn_bn_[i]; }
  BlstmLayer& lstm() { return *lstm_; }
  PoolingHead& head(std::size_t i) { return heads_[i]; }
  Dense& embedding_layer() { return embedding_; }
  BatchNorm& embedding_bn() { return embedding_bn_; }
  Dense& fc2() { return fc2_; }
  BatchNorm& fc2_bn() { return fc2_bn_; }
  Dense& classifier() { return classifier_; }

 private:
  ModelConfig config_;
  bool training_ = true;
  std::vector<TdnnLayer> tdnn_;
  std::vector<BatchNorm> tdnn_bn_;
  std::optional<BlstmLayer> lstm_;
  std::vector<PoolingHead> heads_;
  Dense embedding_;
  BatchNorm embedding_bn_;
  Dense fc2_;
  BatchNorm fc2_bn_;
  Dense classifier_;
};

}  // namespace mlpool

#endif  // MLPOOL_MODEL_H_
