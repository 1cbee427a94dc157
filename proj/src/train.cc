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

#include "mlpool/train.h"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <utility>

#include "glog/logging.h"

#include "mlpool/errors.h"
#include "mlpool/ops.h"

namespace mlpool {

namespace {

constexpr char kParamPrefix[] = "param/";
constexpr char kBufferPrefix[] = "buffer/";
constexpr char kVelocityPrefix[] = "velocity/";

// Exact text form of a double.
std::string HexDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double ParseDouble(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw FormatError(FormatError::Kind::kTruncated, "bad " + what + " value '" + s + "'");
  }
  return v;
}

std::uint64_t ParseCount(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') {
    throw FormatError(FormatError::Kind::kTruncated, "bad " + what + " value '" + s + "'");
  }
  return v;
}

ArchiveEntry ToEntry(const std::string& name, const Tensor& t) {
  ArchiveEntry e;
  e.name = name;
  e.shape.assign(t.shape().begin(), t.shape().end());
  e.values.assign(t.values().begin(), t.values().end());
  return e;
}

// Single-producer single-consumer hand-off with a capacity bound.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  // Returns false once the queue has been closed.
  bool Push(T item) {
    std::unique_lock<std::mutex> lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  // Empty optional once closed and drained.
  std::optional<T> Pop() {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void Close() {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  const std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct ChunkRef {
  std::size_t utterance;
  std::size_t offset;
};

std::vector<ChunkRef> PlanEpoch(const std::vector<LabeledUtterance>& data,
                                const TrainerOptions& options, std::uint64_t epoch,
                                std::size_t* skipped) {
  std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                    static_cast<std::uint32_t>(options.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0xc4u};
  std::mt19937_64 rng(seq);
  std::vector<ChunkRef> chunks;
  std::size_t short_count = 0;
  for (std::size_t u = 0; u < data.size(); ++u) {
    const std::size_t frames = data[u].features.num_frames;
    if (frames < options.chunk_len) {
      ++short_count;
      if (epoch == 0) {
        LOG(WARNING) << "skipping utterance '" << data[u].features.utterance_id << "': "
                     << frames << " frames < chunk length " << options.chunk_len;
      }
      continue;
    }
    std::uniform_int_distribution<std::size_t> offset(0, frames - options.chunk_len);
    for (std::size_t c = 0; c < options.chunks_per_utterance; ++c) {
      chunks.push_back({u, offset(rng)});
    }
  }
  std::shuffle(chunks.begin(), chunks.end(), rng);
  if (skipped != nullptr) *skipped = short_count;
  return chunks;
}

ChunkBatch AssembleBatch(const std::vector<LabeledUtterance>& data, std::span<const ChunkRef> refs,
                         std::size_t chunk_len) {
  const std::size_t dim = data[refs[0].utterance].features.dim;
  std::vector<double> values;
  values.reserve(refs.size() * chunk_len * dim);
  ChunkBatch batch;
  batch.count = refs.size();
  batch.length = chunk_len;
  for (const auto& r : refs) {
    const FeatureMatrix& f = data[r.utterance].features;
    if (f.dim != dim) {
      throw DimensionError("utterance '" + f.utterance_id + "' has feature dim " +
                           std::to_string(f.dim) + ", expected " + std::to_string(dim));
    }
    const auto first = f.values.begin() + static_cast<std::ptrdiff_t>(r.offset * dim);
    values.insert(values.end(), first, first + static_cast<std::ptrdiff_t>(chunk_len * dim));
    batch.labels.push_back(data[r.utterance].label);
  }
  batch.frames = Tensor::FromVector({refs.size() * chunk_len, dim}, std::move(values));
  return batch;
}

}  // namespace

Tensor SpeakerLoss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& z,
                   const LossConfig& config) {
  if (!(config.lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (logits.rank() != 2 || z.rank() != 2 || z.dim(0) != logits.dim(0)) {
    throw DimensionError("loss: logits " + ShapeToString(logits.shape()) + " and embeddings " +
                         ShapeToString(z.shape()) + " disagree");
  }
  Tensor per_sample = SoftmaxCrossEntropy(logits, labels);
  if (config.lambda > 0.0) per_sample = Add(per_sample, Scale(RowNorms(z), config.lambda));
  return Mean(per_sample, 0);
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

void SgdMomentum::Step(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) {
      throw ContractError("parameter '" + p.name + "' has no gradient");
    }
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto& v = velocities_[p.name];
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      w[i] -= learning_rate_ * v[i];
    }
    t.ZeroGrad();
  }
}

Checkpoint Checkpoint::Capture(const SpeakerNet& model, const SgdMomentum* optimizer,
                               std::uint64_t step, std::uint64_t epoch, std::uint64_t seed) {
  Checkpoint c;
  c.config = model.config();
  for (const auto& p : model.Parameters()) c.parameters.push_back(ToEntry(p.name, p.tensor));
  for (const auto& b : model.Buffers()) c.buffers.push_back(ToEntry(b.name, b.tensor));
  if (optimizer != nullptr) {
    c.learning_rate = optimizer->learning_rate();
    c.momentum = optimizer->momentum();
    for (const auto& p : model.Parameters()) {
      auto it = optimizer->velocities().find(p.name);
      if (it == optimizer->velocities().end()) continue;
      ArchiveEntry e = ToEntry(p.name, p.tensor);
      e.values = it->second;
      c.velocities.push_back(std::move(e));
    }
  }
  c.step = step;
  c.epoch = epoch;
  c.seed = seed;
  return c;
}

std::string Checkpoint::Serialize() const {
  TensorArchive a;
  a.magic = std::string(kMagic);
  a.metadata = {{"config", config.ToText()},
                {"learning_rate", HexDouble(learning_rate)},
                {"momentum", HexDouble(momentum)},
                {"step", std::to_string(step)},
                {"epoch", std::to_string(epoch)},
                {"seed", std::to_string(seed)}};
  auto add = [&](const std::vector<ArchiveEntry>& entries, const char* prefix) {
    for (ArchiveEntry e : entries) {
      e.name = prefix + e.name;
      a.entries.push_back(std::move(e));
    }
  };
  add(parameters, kParamPrefix);
  add(buffers, kBufferPrefix);
  add(velocities, kVelocityPrefix);
  return SerializeArchive(a);
}

Checkpoint Checkpoint::Parse(std::string_view bytes) {
  const TensorArchive a = ParseArchive(bytes, kMagic);
  Checkpoint c;
  c.config = ModelConfig::FromText(a.Meta("config"));
  c.learning_rate = ParseDouble(a.Meta("learning_rate"), "learning_rate");
  c.momentum = ParseDouble(a.Meta("momentum"), "momentum");
  c.step = ParseCount(a.Meta("step"), "step");
  c.epoch = ParseCount(a.Meta("epoch"), "epoch");
  c.seed = ParseCount(a.Meta("seed"), "seed");
  for (const auto& e : a.entries) {
    auto strip = [&](std::string_view prefix, std::vector<ArchiveEntry>* out) {
      if (e.name.rfind(prefix, 0) != 0) return false;
      ArchiveEntry copy = e;
      copy.name = e.name.substr(prefix.size());
      out->push_back(std::move(copy));
      return true;
    };
    if (!strip(kParamPrefix, &c.parameters) && !strip(kBufferPrefix, &c.buffers) &&
        !strip(kVelocityPrefix, &c.velocities)) {
      throw FormatError(FormatError::Kind::kTruncated, "unexpected checkpoint entry '" + e.name + "'");
    }
  }
  return c;
}

void Checkpoint::Save(const std::string& path) const { WriteFileAtomic(path, Serialize()); }

Checkpoint Checkpoint::Load(const std::string& path) {
  try {
    return Parse(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

void Checkpoint::RestoreModel(SpeakerNet* model) const {
  struct Copy {
    Tensor target;
    const ArchiveEntry* source;
  };
  std::vector<Copy> plan;
  auto match = [&](const std::vector<NamedTensor>& targets,
                   const std::vector<ArchiveEntry>& sources) {
    if (targets.size() != sources.size()) {
      // Report the first name that differs, or the first extra tensor.
      for (std::size_t i = 0; i < std::max(targets.size(), sources.size()); ++i) {
        const std::string name = i < targets.size() ? targets[i].name : sources[i].name;
        if (i >= targets.size() || i >= sources.size() || targets[i].name != sources[i].name) {
          throw ConfigError("checkpoint does not match the model at tensor '" + name + "'");
        }
      }
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      const auto& s = sources[i];
      const std::vector<std::uint64_t> shape(t.tensor.shape().begin(), t.tensor.shape().end());
      if (t.name != s.name || shape != s.shape) {
        throw ConfigError("checkpoint does not match the model at tensor '" + t.name +
                          "': model " + ShapeToString(t.tensor.shape()) + ", checkpoint '" +
                          s.name + "'");
      }
      plan.push_back({t.tensor, &s});
    }
  };
  match(model->Parameters(), parameters);
  match(model->Buffers(), buffers);
  for (auto& c : plan) {
    auto dst = c.target.mutable_values();
    std::copy(c.source->values.begin(), c.source->values.end(), dst.begin());
  }
}

void Checkpoint::RestoreOptimizer(SgdMomentum* optimizer) const {
  optimizer->set_learning_rate(learning_rate);
  for (const auto& v : velocities) optimizer->set_velocity(v.name, v.values);
}

SpeakerNet Checkpoint::BuildModel() const {
  SpeakerNet model(config, seed);
  RestoreModel(&model);
  model.SetTraining(false);
  return model;
}

std::vector<LabeledUtterance> LoadLabeledSet(const Manifest& manifest,
                                             std::vector<std::string>* speakers) {
  const auto spk = manifest.Speakers();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < spk.size(); ++i) index[spk[i]] = i;
  std::vector<LabeledUtterance> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries()) {
    LabeledUtterance u;
    u.label = index.at(e.speaker_id);
    u.features = ReadFeatures(e.path);
    u.features.utterance_id = e.utterance_id;
    out.push_back(std::move(u));
  }
  if (speakers != nullptr) *speakers = spk;
  return out;
}

void TrainerOptions::Validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (chunk_len == 0) throw ConfigError("chunk_len must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (chunks_per_utterance == 0) throw ConfigError("chunks_per_utterance must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

std::vector<ChunkBatch> MakeEpochBatches(const std::vector<LabeledUtterance>& data,
                                         const TrainerOptions& options, std::uint64_t epoch,
                                         std::size_t* skipped) {
  const auto plan = PlanEpoch(data, options, epoch, skipped);
  std::vector<ChunkBatch> batches;
  for (std::size_t i = 0; i < plan.size(); i += options.batch_size) {
    const std::size_t n = std::min(options.batch_size, plan.size() - i);
    batches.push_back(
        AssembleBatch(data, std::span<const ChunkRef>(plan).subspan(i, n), options.chunk_len));
  }
  return batches;
}

Trainer::Trainer(SpeakerNet* model, TrainerOptions options)
    : model_(model),
      options_(std::move(options)),
      optimizer_(options_.learning_rate, options_.momentum) {
  options_.Validate();
  if (options_.chunk_len < model_->config().MinFrames()) {
    throw ConfigError("chunk_len " + std::to_string(options_.chunk_len) +
                      " is shorter than the receptive field (" +
                      std::to_string(model_->config().MinFrames()) + " frames)");
  }
}

void Trainer::Resume(const Checkpoint& checkpoint) {
  checkpoint.RestoreModel(model_);
  checkpoint.RestoreOptimizer(&optimizer_);
  step_ = checkpoint.step;
  epoch_ = checkpoint.epoch;
}

double Trainer::LearningRateFor(std::uint64_t epoch) const {
  if (options_.lr_decay_epochs == 0) return options_.learning_rate;
  return options_.learning_rate *
         std::pow(options_.lr_decay, static_cast<double>(epoch / options_.lr_decay_epochs));
}

Checkpoint Trainer::MakeCheckpoint() const {
  return Checkpoint::Capture(*model_, &optimizer_, step_, epoch_, options_.seed);
}

std::vector<EpochRecord> Trainer::Run(const std::vector<LabeledUtterance>& data,
                                      const StepCallback& on_step,
                                      const CheckpointCallback& on_checkpoint) {
  const std::size_t num_speakers = model_->config().num_speakers;
  std::vector<bool> seen(num_speakers, false);
  for (const auto& u : data) {
    if (u.label >= num_speakers) {
      throw ConfigError("utterance '" + u.features.utterance_id + "' has label " +
                        std::to_string(u.label) + " but the classifier has " +
                        std::to_string(num_speakers) + " outputs");
    }
    seen[u.label] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw DegenerateInputError("training needs utterances from at least two speakers");
  }
  const LossConfig loss_config{options_.lambda};
  model_->SetTraining(true);

  std::vector<EpochRecord> records;
  for (; epoch_ < options_.epochs; ++epoch_) {
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.learning_rate = LearningRateFor(epoch_);
    optimizer_.set_learning_rate(rec.learning_rate);

    const auto plan = PlanEpoch(data, options_, epoch_, &rec.skipped_utterances);
    if (plan.empty()) {
      throw DegenerateInputError("epoch " + std::to_string(epoch_) + " has no chunks: all " +
                                 std::to_string(data.size()) + " utterances are shorter than " +
                                 std::to_string(options_.chunk_len) + " frames");
    }
    if (rec.skipped_utterances > 0) {
      LOG(WARNING) << "epoch " << epoch_ << ": skipped " << rec.skipped_utterances
                   << " short utterances";
    }

    BoundedQueue<ChunkBatch> queue(options_.queue_capacity);
    std::exception_ptr producer_error;
    std::thread producer([&] {
      try {
        for (std::size_t i = 0; i < plan.size(); i += options_.batch_size) {
          const std::size_t n = std::min(options_.batch_size, plan.size() - i);
          if (!queue.Push(AssembleBatch(data, std::span<const ChunkRef>(plan).subspan(i, n),
                                        options_.chunk_len))) {
            return;
          }
        }
      } catch (...) {
        producer_error = std::current_exception();
      }
      queue.Close();
    });
    struct Joiner {
      BoundedQueue<ChunkBatch>* queue;
      std::thread* thread;
      ~Joiner() {
        queue->Close();
        thread->join();
      }
    } joiner{&queue, &producer};

    double loss_sum = 0.0, norm_sum = 0.0;
    while (auto batch = queue.Pop()) {
      SequenceBatch input{batch->frames, batch->count, batch->length};
      SpeakerNet::Output out = model_->Forward(input);
      Tensor loss = SpeakerLoss(out.logits, batch->labels, out.z, loss_config);
      Backward(loss);
      optimizer_.Step(model_->Parameters());
      ++step_;

      StepRecord s;
      s.step = step_;
      s.epoch = epoch_;
      s.loss = loss.item();
      const std::size_t e = out.z.dim(1);
      auto zv = out.z.values();
      for (std::size_t r = 0; r < batch->count; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < e; ++j) ss += zv[r * e + j] * zv[r * e + j];
        s.mean_z_norm += std::sqrt(ss);
      }
      s.mean_z_norm /= static_cast<double>(batch->count);
      loss_sum += s.loss;
      norm_sum += s.mean_z_norm;
      ++rec.steps;
      if (options_.log_every > 0 && step_ % options_.log_every == 0) {
        LOG(INFO) << "step " << s.step << " epoch " << s.epoch << " loss " << s.loss
                  << " mean_z_norm " << s.mean_z_norm;
      }
      if (on_step) on_step(s);
    }
    if (producer_error) std::rethrow_exception(producer_error);

    rec.mean_loss = loss_sum / static_cast<double>(rec.steps);
    rec.mean_z_norm = norm_sum / static_cast<double>(rec.steps);
    LOG(INFO) << "epoch " << rec.epoch << " steps " << rec.steps << " lr " << rec.learning_rate
              << " mean_loss " << rec.mean_loss << " mean_z_norm " << rec.mean_z_norm;
    records.push_back(rec);

    const std::uint64_t done = epoch_ + 1;
    const bool periodic = options_.checkpoint_every > 0 && done % options_.checkpoint_every == 0;
    if (on_checkpoint && (periodic || done == options_.epochs)) {
      on_checkpoint(Checkpoint::Capture(*model_, &optimizer_, step_, done, options_.seed));
    }
  }
  return records;
}

}  // namespace mlpool
