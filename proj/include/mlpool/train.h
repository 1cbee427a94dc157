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

#ifndef MLPOOL_TRAIN_H_
#define MLPOOL_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mlpool/archive.h"
#include "mlpool/data.h"
#include "mlpool/model.h"
#include "mlpool/tensor.h"

namespace mlpool {

struct LossConfig {
  double lambda = 0.0;
};

// Mean over the batch of softmax cross-entropy at the true class plus
// lambda * ||z_i||_2. With lambda == 0 the norm term is not built at all.
Tensor SpeakerLoss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& z,
                   const LossConfig& config);

// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v; gradients cleared.
class SgdMomentum {
 public:
  explicit SgdMomentum(double learning_rate, double momentum = 0.9);

  // Throws ContractError naming the first parameter without a gradient.
  void Step(const std::vector<NamedTensor>& params);

  double learning_rate() const { return learning_rate_; }
  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double momentum() const { return momentum_; }
  const std::map<std::string, std::vector<double>>& velocities() const { return velocities_; }
  void set_velocity(const std::string& name, std::vector<double> v) {
    velocities_[name] = std::move(v);
  }

 private:
  double learning_rate_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocities_;
};

// Full training state. Tensors are stored under "param/", "buffer/" and
// "velocity/" prefixes in an archive with magic "MLPC".
struct Checkpoint {
  static constexpr std::string_view kMagic = "MLPC";

  ModelConfig config;
  std::vector<ArchiveEntry> parameters;
  std::vector<ArchiveEntry> buffers;
  std::vector<ArchiveEntry> velocities;
  double learning_rate = 0.0;
  double momentum = 0.9;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;

  static Checkpoint Capture(const SpeakerNet& model, const SgdMomentum* optimizer,
                            std::uint64_t step, std::uint64_t epoch, std::uint64_t seed);
  std::string Serialize() const;
  static Checkpoint Parse(std::string_view bytes);
  void Save(const std::string& path) const;
  static Checkpoint Load(const std::string& path);

  // Copies parameters and running statistics into |model|. Throws
  // ConfigError naming the first tensor that is missing or has another
  // shape; |model| is untouched in that case.
  void RestoreModel(SpeakerNet* model) const;
  void RestoreOptimizer(SgdMomentum* optimizer) const;
  // Builds a model from the stored config and restores it, in eval mode.
  SpeakerNet BuildModel() const;
};

// One utterance with its speaker index in [0, num_speakers).
struct LabeledUtterance {
  std::size_t label = 0;
  FeatureMatrix features;
};

// Loads every manifest entry; labels follow the sorted speaker ids, which
// are returned through |speakers| when non-null.
std::vector<LabeledUtterance> LoadLabeledSet(const Manifest& manifest,
                                             std::vector<std::string>* speakers);

struct TrainerOptions {
  std::size_t epochs = 1;
  std::size_t chunk_len = 200;
  std::size_t batch_size = 32;
  std::size_t chunks_per_utterance = 1;
  double learning_rate = 0.01;
  double momentum = 0.9;
  // Step decay: lr is multiplied by lr_decay every lr_decay_epochs epochs
  // (0 keeps it constant).
  double lr_decay = 0.5;
  std::size_t lr_decay_epochs = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t queue_capacity = 4;
  // Emit a checkpoint every this many epochs (0: only after the last one).
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 10;

  void Validate() const;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double mean_z_norm = 0.0;
};

struct EpochRecord {
  std::uint64_t epoch = 0;
  std::size_t steps = 0;
  std::size_t skipped_utterances = 0;
  double mean_loss = 0.0;
  double mean_z_norm = 0.0;
  double learning_rate = 0.0;
};

// A batch of equal-length chunks cut from the training utterances.
struct ChunkBatch {
  Tensor frames;  // [count * length x dim], sequence-major rows
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<std::size_t> labels;
};

// All batches of one epoch: every utterance with at least |chunk_len| frames
// contributes chunks_per_utterance chunks at uniform offsets; chunks are
// shuffled and grouped (the last batch may be smaller). Deterministic in
// (seed, epoch). |skipped| receives the number of short utterances.
std::vector<ChunkBatch> MakeEpochBatches(const std::vector<LabeledUtterance>& data,
                                         const TrainerOptions& options, std::uint64_t epoch,
                                         std::size_t* skipped);

// Chunked training loop. Batches for an epoch are assembled on a producer
// thread and handed over through a bounded queue; the model only ever runs
// on the calling thread, so results do not depend on scheduling.
class Trainer {
 public:
  using StepCallback = std::function<void(const StepRecord&)>;
  using CheckpointCallback = std::function<void(const Checkpoint&)>;

  Trainer(SpeakerNet* model, TrainerOptions options);

  // Continues from a checkpoint taken by a previous run.
  void Resume(const Checkpoint& checkpoint);

  // Runs the remaining epochs. Throws DegenerateInputError when an epoch
  // yields no chunks and ConfigError when a label exceeds the classifier.
  std::vector<EpochRecord> Run(const std::vector<LabeledUtterance>& data,
                               const StepCallback& on_step = nullptr,
                               const CheckpointCallback& on_checkpoint = nullptr);

  const SgdMomentum& optimizer() const { return optimizer_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t epoch() const { return epoch_; }
  Checkpoint MakeCheckpoint() const;

 private:
  double LearningRateFor(std::uint64_t epoch) const;

  SpeakerNet* model_;
  TrainerOptions options_;
  SgdMomentum optimizer_;
  std::uint64_t step_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace mlpool

#endif  // MLPOOL_TRAIN_H_
