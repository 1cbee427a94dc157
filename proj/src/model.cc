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

#include "mlpool/model.h"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "mlpool/errors.h"
#include "mlpool/ops.h"

namespace mlpool {

namespace {

const std::map<std::string, std::vector<std::string>>& TableTaps() {
  static const std::map<std::string, std::vector<std::string>> taps = {
      {"x-vector", {"tdnn3"}},
      {"A", {"tdnn1", "tdnn2", "tdnn3"}},
      {"B", {"lstm"}},
      {"MP", {"tdnn3", "lstm"}},
  };
  return taps;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t ParseSize(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const std::string t = Trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" +
                      text + "'");
  }
  return v;
}

template <typename T>
std::string JoinList(const std::vector<T>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
  return os.str();
}

}  // namespace

const std::vector<std::string>& ModelConfig::TopologyNames() {
  static const std::vector<std::string> names = {"x-vector", "A", "B", "MP"};
  return names;
}

ModelConfig ModelConfig::Preset(const std::string& name, std::size_t num_speakers) {
  auto it = TableTaps().find(name);
  if (it == TableTaps().end()) {
    throw ConfigError("unknown model '" + name + "'; valid names: x-vector, A, B, MP");
  }
  ModelConfig c;
  c.name = name;
  c.taps = it->second;
  c.num_speakers = num_speakers;
  if (name == "x-vector" || name == "B") c.head_widths = {1500};
  if (name == "A") c.head_widths = {500, 500, 500};
  if (name == "MP") c.head_widths = {750, 750};
  c.lstm_hidden = c.HasLstm() ? 512 : 0;
  return c;
}

bool ModelConfig::HasLstm() const {
  return std::find(taps.begin(), taps.end(), "lstm") != taps.end();
}

void ModelConfig::Validate() const {
  auto it = TableTaps().find(name);
  if (it == TableTaps().end()) {
    throw ConfigError("unknown model '" + name + "'; valid names: x-vector, A, B, MP");
  }
  if (taps != it->second) {
    throw ConfigError("model '" + name + "' requires taps [" + JoinList(it->second) +
                      "], got [" + JoinList(taps) + "]");
  }
  if (input_dim == 0) throw ConfigError("input layer: input_dim must be positive");
  if (tdnn.size() != 3) {
    throw ConfigError("frame-level stack needs exactly 3 tdnn layers, got " +
                      std::to_string(tdnn.size()));
  }
  for (std::size_t i = 0; i < tdnn.size(); ++i) {
    if (tdnn[i].filters == 0 || tdnn[i].window == 0 || tdnn[i].dilation == 0) {
      throw ConfigError("layer tdnn" + std::to_string(i + 1) +
                        ": filters, window and dilation must be >= 1");
    }
  }
  if (HasLstm() != (lstm_hidden > 0)) {
    throw ConfigError("layer lstm: lstm_hidden must be positive exactly when a tap uses it");
  }
  if (head_widths.size() != taps.size()) {
    throw ConfigError("pooling heads: " + std::to_string(head_widths.size()) +
                      " widths for " + std::to_string(taps.size()) + " taps");
  }
  if (head_hidden == 0) throw ConfigError("pooling heads: head_hidden must be positive");
  for (std::size_t i = 0; i < head_widths.size(); ++i) {
    if (head_widths[i] == 0) {
      throw ConfigError("pooling head on " + taps[i] + ": width must be positive");
    }
  }
  if (embedding_dim == 0) throw ConfigError("embedding layer: embedding_dim must be positive");
  if (fc2_dim == 0) throw ConfigError("layer fc2: fc2_dim must be positive");
  if (num_speakers < 2) {
    throw ConfigError("classifier layer: num_speakers must be >= 2, got " +
                      std::to_string(num_speakers));
  }
}

std::size_t ModelConfig::PooledDim() const {
  std::size_t d = 0;
  for (std::size_t w : head_widths) d += 2 * w;
  return d;
}

std::size_t ModelConfig::MinFrames() const {
  std::size_t context = 0;
  for (const TdnnSpec& s : tdnn) context += (s.window - 1) * s.dilation;
  return context + 1;
}

std::string ModelConfig::ToText() const {
  std::ostringstream os;
  os << "name = " << name << "\n";
  os << "input_dim = " << input_dim << "\n";
  os << "tdnn = ";
  for (std::size_t i = 0; i < tdnn.size(); ++i) {
    os << (i ? "," : "") << tdnn[i].filters << "/" << tdnn[i].window << "/" << tdnn[i].dilation;
  }
  os << "\n";
  os << "lstm_hidden = " << lstm_hidden << "\n";
  os << "taps = " << JoinList(taps) << "\n";
  os << "head_hidden = " << head_hidden << "\n";
  os << "head_widths = " << JoinList(head_widths) << "\n";
  os << "embedding_dim = " << embedding_dim << "\n";
  os << "fc2_dim = " << fc2_dim << "\n";
  os << "num_speakers = " << num_speakers << "\n";
  return os.str();
}

void ModelConfig::Set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = Trim(raw_key);
  const std::string value = Trim(raw_value);
  if (key == "name") {
    name = value;
  } else if (key == "input_dim") {
    input_dim = ParseSize(key, value);
  } else if (key == "tdnn") {
    tdnn.clear();
    for (const std::string& layer : SplitList(value, ',')) {
      auto parts = SplitList(layer, '/');
      if (parts.size() != 3) {
        throw ConfigError("config key 'tdnn': expected filters/window/dilation, got '" +
                          layer + "'");
      }
      tdnn.push_back({ParseSize(key, parts[0]), ParseSize(key, parts[1]),
                      ParseSize(key, parts[2])});
    }
  } else if (key == "lstm_hidden") {
    lstm_hidden = ParseSize(key, value);
  } else if (key == "taps") {
    taps = SplitList(value, ',');
  } else if (key == "head_hidden") {
    head_hidden = ParseSize(key, value);
  } else if (key == "head_widths") {
    head_widths.clear();
    for (const std::string& w : SplitList(value, ',')) head_widths.push_back(ParseSize(key, w));
  } else if (key == "embedding_dim") {
    embedding_dim = ParseSize(key, value);
  } else if (key == "fc2_dim") {
    fc2_dim = ParseSize(key, value);
  } else if (key == "num_speakers") {
    num_speakers = ParseSize(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ModelConfig ModelConfig::FromText(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (Trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("model config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    c.Set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

SpeakerNet::SpeakerNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng(seed);
  std::size_t dim = config_.input_dim;
  for (const TdnnSpec& spec : config_.tdnn) {
    tdnn_.emplace_back(dim, spec.filters, spec.window, spec.dilation, rng);
    tdnn_bn_.emplace_back(spec.filters);
    dim = spec.filters;
  }
  if (config_.HasLstm()) lstm_.emplace(dim, config_.lstm_hidden, rng);
  for (std::size_t i = 0; i < config_.taps.size(); ++i) {
    const std::string& tap = config_.taps[i];
    const std::size_t in_dim =
        tap == "lstm" ? lstm_->out_dim() : config_.tdnn[tap.back() - '1'].filters;
    heads_.emplace_back(in_dim, config_.head_hidden, config_.head_widths[i], rng);
  }
  embedding_ = Dense(config_.PooledDim(), config_.embedding_dim, rng);
  embedding_bn_ = BatchNorm(config_.embedding_dim);
  fc2_ = Dense(config_.embedding_dim, config_.fc2_dim, rng);
  fc2_bn_ = BatchNorm(config_.fc2_dim);
  classifier_ = Dense(config_.fc2_dim, config_.num_speakers, rng);
}

SpeakerNet::Output SpeakerNet::Forward(const SequenceBatch& batch) {
  if (batch.dim() != config_.input_dim) {
    throw DimensionError("model expects feature dim " + std::to_string(config_.input_dim) +
                         ", got " + std::to_string(batch.dim()));
  }
  if (batch.length < config_.MinFrames()) {
    throw DegenerateInputError("utterance has " + std::to_string(batch.length) +
                               " frames; model needs at least " +
                               std::to_string(config_.MinFrames()));
  }
  std::map<std::string, SequenceBatch> tapped;
  SequenceBatch h = batch;
  for (std::size_t i = 0; i < tdnn_.size(); ++i) {
    h = tdnn_[i].Forward(h);
    h.frames = tdnn_bn_[i].Forward(Relu(h.frames));
    tapped["tdnn" + std::to_string(i + 1)] = h;
  }
  if (lstm_) tapped["lstm"] = lstm_->Forward(h);

  std::vector<Tensor> pooled_parts;
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    pooled_parts.push_back(heads_[i].Forward(tapped.at(config_.taps[i])));
  }
  Output out;
  out.pooled = pooled_parts.size() == 1 ? pooled_parts[0] : Concat(pooled_parts, 1);
  out.z = embedding_.Forward(out.pooled);
  Tensor a = embedding_bn_.Forward(Relu(out.z));
  out.x = fc2_.Forward(a);
  Tensor b = fc2_bn_.Forward(Relu(out.x));
  out.logits = classifier_.Forward(b);
  return out;
}

SpeakerNet::Output SpeakerNet::Forward(const Tensor& features) {
  Output o = Forward(SequenceBatch::Single(features));
  o.logits = Reshape(o.logits, {o.logits.dim(1)});
  o.z = Reshape(o.z, {o.z.dim(1)});
  o.x = Reshape(o.x, {o.x.dim(1)});
  o.pooled = Reshape(o.pooled, {o.pooled.dim(1)});
  return o;
}

Embedding SpeakerNet::ExtractEmbedding(const Tensor& features, const std::string& utterance_id) {
  if (training_) throw ContractError("embedding extraction requires eval mode");
  NoGradGuard no_grad;
  Output o = Forward(features);
  return Embedding{utterance_id, std::vector<double>(o.z.values().begin(), o.z.values().end())};
}

void SpeakerNet::SetTraining(bool training) {
  training_ = training;
  for (BatchNorm& bn : tdnn_bn_) bn.set_training(training);
  for (PoolingHead& head : heads_) head.set_training(training);
  embedding_bn_.set_training(training);
  fc2_bn_.set_training(training);
}

std::vector<NamedTensor> SpeakerNet::Parameters() const {
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < tdnn_.size(); ++i) {
    const std::string p = "tdnn" + std::to_string(i + 1);
    tdnn_[i].Collect(p + ".affine", &params);
    tdnn_bn_[i].Collect(p + ".bn", &params);
  }
  if (lstm_) lstm_->Collect("lstm", &params);
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    heads_[i].Collect("pool_" + config_.taps[i], &params);
  }
  embedding_.Collect("embedding", &params);
  embedding_bn_.Collect("embedding_bn", &params);
  fc2_.Collect("fc2", &params);
  fc2_bn_.Collect("fc2_bn", &params);
  classifier_.Collect("output", &params);
  return params;
}

std::vector<NamedTensor> SpeakerNet::Buffers() const {
  std::vector<NamedTensor> buffers;
  for (std::size_t i = 0; i < tdnn_bn_.size(); ++i) {
    tdnn_bn_[i].CollectBuffers("tdnn" + std::to_string(i + 1) + ".bn", &buffers);
  }
  for (std::size_t i = 0; i < heads_.size(); ++i) {
    heads_[i].CollectBuffers("pool_" + config_.taps[i], &buffers);
  }
  embedding_bn_.CollectBuffers("embedding_bn", &buffers);
  fc2_bn_.CollectBuffers("fc2_bn", &buffers);
  return buffers;
}

}  // namespace mlpool
