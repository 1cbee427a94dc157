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

#ifndef MLPOOL_DATA_H_
#define MLPOOL_DATA_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mlpool/tensor.h"

namespace mlpool {

// T x d acoustic features of one utterance, row-major.
struct FeatureMatrix {
  std::string utterance_id;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  double frame_period_ms = 10.0;

  double at(std::size_t t, std::size_t j) const { return values[t * dim + j]; }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * dim, dim);
  }
  Tensor ToTensor() const;
  // Throws DegenerateInputError / NumericError when T = 0 or values are
  // not finite.
  void Validate() const;
};

// Feature container, little-endian:
//   "EMBK" | u32 version (1) | u32 T | u32 d | T*d f32 row-major | u32 CRC-32
// of all preceding bytes. Values are stored at 32-bit precision.
inline constexpr std::string_view kFeatureMagic = "EMBK";
inline constexpr std::uint32_t kFeatureVersion = 1;

std::string EncodeFeatures(const FeatureMatrix& features);
FeatureMatrix DecodeFeatures(std::string_view bytes);
void WriteFeatures(const FeatureMatrix& features, const std::string& path);
FeatureMatrix ReadFeatures(const std::string& path);
// Reads whitespace-separated rows of numbers (one frame per line).
FeatureMatrix ParseTextFeatures(std::string_view text);

// Keeps frames whose energy is at least mean - margin * std over the
// utterance.
// Frame order is preserved.
FeatureMatrix EnergyVad(const FeatureMatrix& features, std::size_t energy_column,
                        double margin = 0.5);

// Subtracts from every frame the mean over a centered window of |window|
// frames, truncated at the utterance edges.
FeatureMatrix SlidingMeanNormalize(const FeatureMatrix& features, std::size_t window = 300);

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string path;

  bool operator==(const ManifestEntry&) const = default;
};

// Text lines "utterance-id speaker-id path". Relative paths are resolved
// against the manifest's directory on read.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries);

  static Manifest Read(const std::string& path);
  static Manifest Parse(std::string_view text, const std::string& base_dir);
  void Write(const std::string& path) const;
  std::string ToText() const;

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Sorted unique speaker ids.
  std::vector<std::string> Speakers() const;
  std::map<std::string, std::string> SpeakerOf() const;
  const ManifestEntry* Find(const std::string& utterance_id) const;

 private:
  std::vector<ManifestEntry> entries_;
};

// Splits off the last |num_eval_speakers| speakers (sorted order) into the
// second manifest.
std::pair<Manifest, Manifest> SplitBySpeaker(const Manifest& manifest,
                                             std::size_t num_eval_speakers);

struct SyntheticSpec {
  std::size_t num_speakers = 20;
  std::size_t utterances_per_speaker = 10;
  std::size_t frames_per_utterance = 300;
  std::size_t feature_dim = 43;
  double separation = 1.0;  // speaker means ~ N(0, separation^2 I)
  double rho = 0.5;         // AR(1) correlation, in [0, 1)
  double noise = 1.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SyntheticUtterance {
  std::string speaker_id;
  FeatureMatrix features;
};

// x_t = m_s + rho (x_{t-1} - m_s) + noise * eta_t with x_{-1} = m_s.
// Deterministic under the seed.
std::vector<SyntheticUtterance> GenerateSyntheticCorpus(const SyntheticSpec& spec);
// Speaker means in generation order; exposed for tests.
std::vector<std::vector<double>> SyntheticSpeakerMeans(const SyntheticSpec& spec);
// Writes feats/<utt>.feat files and manifest.txt under |out_dir|, which must
// exist. Returns the manifest.
Manifest GenerateSynthetic(const SyntheticSpec& spec, const std::string& out_dir);

struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool target = false;

  bool operator==(const Trial&) const = default;
};

// NIST-style key lines "enroll-id test-id target|nontarget".
std::vector<Trial> ParseTrials(std::string_view text);
std::vector<Trial> LoadTrials(const std::string& path);
std::string TrialsToText(const std::vector<Trial>& trials);
void WriteTrials(const std::vector<Trial>& trials, const std::string& path);
// Throws ReferenceError naming the first id not in |known|.
void CheckTrialIds(const std::vector<Trial>& trials,
                   const std::map<std::string, std::size_t>& known);

// Each speaker's utterances are split into an enrollment half (first
// ceil(n/2)) and a test half; trials pair an enrollment utterance with a test
// utterance, so no utterance is ever paired with itself. Samples without
// replacement up to the requested counts.
std::vector<Trial> MakeTrials(const Manifest& manifest, std::size_t num_target,
                              std::size_t num_nontarget, std::uint64_t seed);

}  // namespace mlpool

#endif  // MLPOOL_DATA_H_
