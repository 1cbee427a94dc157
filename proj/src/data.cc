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

#include "mlpool/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "glog/logging.h"

#include "mlpool/archive.h"
#include "mlpool/errors.h"

namespace mlpool {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> SplitWhitespace(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// Calls fn(line_number, line) for every non-blank line that does not start
// with '#'.
template <typename Fn>
void ForEachLine(std::string_view text, Fn fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] != '#') fn(line_no, line);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

}  // namespace

Tensor FeatureMatrix::ToTensor() const {
  Validate();
  return Tensor::FromVector({num_frames, dim}, values);
}

void FeatureMatrix::Validate() const {
  if (num_frames == 0 || dim == 0) {
    throw DegenerateInputError("feature matrix '" + utterance_id + "' is empty");
  }
  if (values.size() != num_frames * dim) {
    throw DimensionError("feature matrix '" + utterance_id + "' holds " +
                         std::to_string(values.size()) + " values, expected " +
                         std::to_string(num_frames * dim));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("feature matrix '" + utterance_id + "' has a non-finite value at frame " +
                         std::to_string(i / dim));
    }
  }
}

std::string EncodeFeatures(const FeatureMatrix& features) {
  features.Validate();
  if (features.num_frames > std::numeric_limits<std::uint32_t>::max() ||
      features.dim > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("feature matrix too large for the container");
  }
  std::string out(kFeatureMagic);
  out.reserve(16 + 4 * features.values.size() + 4);
  AppendU32(&out, kFeatureVersion);
  AppendU32(&out, static_cast<std::uint32_t>(features.num_frames));
  AppendU32(&out, static_cast<std::uint32_t>(features.dim));
  for (double v : features.values) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) {
      throw NumericError("feature value " + std::to_string(v) + " overflows 32-bit storage");
    }
    AppendF32(&out, f);
  }
  AppendU32(&out, Crc32(out));
  return out;
}

FeatureMatrix DecodeFeatures(std::string_view bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < kFeatureMagic.size()) {
    throw FormatError(Kind::kTruncated, "feature file truncated before the magic");
  }
  if (bytes.substr(0, kFeatureMagic.size()) != kFeatureMagic) {
    throw FormatError(Kind::kBadMagic, "not a feature file (bad magic)");
  }
  ByteReader reader(bytes.substr(kFeatureMagic.size()));
  const std::uint32_t version = reader.U32();
  if (version != kFeatureVersion) {
    throw FormatError(Kind::kVersionMismatch,
                      "feature file version " + std::to_string(version) + ", expected " +
                          std::to_string(kFeatureVersion));
  }
  FeatureMatrix f;
  f.num_frames = reader.U32();
  f.dim = reader.U32();
  const std::uint64_t count = static_cast<std::uint64_t>(f.num_frames) * f.dim;
  if (count == 0) throw DegenerateInputError("feature file declares an empty matrix");
  if (reader.remaining() < count * 4 + 4) {
    throw FormatError(Kind::kTruncated, "feature file truncated: " +
                                            std::to_string(reader.remaining()) +
                                            " bytes left for " + std::to_string(count) + " values");
  }
  f.values.resize(count);
  for (auto& v : f.values) v = reader.F32();
  const std::size_t body = kFeatureMagic.size() + reader.position();
  const std::uint32_t stored = reader.U32();
  if (reader.remaining() != 0) {
    throw FormatError(Kind::kTruncated, "trailing bytes after feature checksum");
  }
  if (stored != Crc32(bytes.substr(0, body))) {
    throw FormatError(Kind::kChecksum, "feature file checksum mismatch");
  }
  f.Validate();
  return f;
}

void WriteFeatures(const FeatureMatrix& features, const std::string& path) {
  WriteFileAtomic(path, EncodeFeatures(features));
}

FeatureMatrix ReadFeatures(const std::string& path) {
  try {
    FeatureMatrix f = DecodeFeatures(ReadFileBytes(path));
    f.utterance_id = fs::path(path).stem().string();
    return f;
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

FeatureMatrix ParseTextFeatures(std::string_view text) {
  FeatureMatrix f;
  ForEachLine(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = SplitWhitespace(line);
    if (f.dim == 0) f.dim = toks.size();
    if (toks.size() != f.dim) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(f.dim) +
                       " values, found " + std::to_string(toks.size()));
    }
    for (const auto& tok : toks) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
      f.values.push_back(v);
    }
    ++f.num_frames;
  });
  f.Validate();
  return f;
}

FeatureMatrix EnergyVad(const FeatureMatrix& features, std::size_t energy_column, double margin) {
  features.Validate();
  if (energy_column >= features.dim) {
    throw DimensionError("energy column " + std::to_string(energy_column) +
                         " out of range for dim " + std::to_string(features.dim));
  }
  const std::size_t n = features.num_frames;
  // Energies are measured relative to the first frame so that constant
  // energy gives an exactly zero mean offset and spread.
  const double pivot = features.at(0, energy_column);
  double mean = 0.0;
  for (std::size_t t = 0; t < n; ++t) mean += features.at(t, energy_column) - pivot;
  mean /= n;
  double ss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = features.at(t, energy_column) - pivot - mean;
    ss += d * d;
  }
  const double threshold = mean - margin * std::sqrt(ss / n);

  FeatureMatrix out;
  out.utterance_id = features.utterance_id;
  out.dim = features.dim;
  out.frame_period_ms = features.frame_period_ms;
  for (std::size_t t = 0; t < n; ++t) {
    // Frames at the threshold are kept.
    if (features.at(t, energy_column) - pivot >= threshold) {
      auto fr = features.frame(t);
      out.values.insert(out.values.end(), fr.begin(), fr.end());
      ++out.num_frames;
    }
  }
  if (out.num_frames == 0) {
    throw DegenerateInputError("VAD removed every frame of '" + features.utterance_id + "'");
  }
  return out;
}

FeatureMatrix SlidingMeanNormalize(const FeatureMatrix& features, std::size_t window) {
  features.Validate();
  if (window == 0) throw ConfigError("sliding-window length must be positive");
  const std::size_t n = features.num_frames, d = features.dim;
  // Prefix sums per column.
  std::vector<double> prefix((n + 1) * d, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) prefix[(t + 1) * d + j] = prefix[t * d + j] + features.at(t, j);
  }
  FeatureMatrix out = features;
  const std::size_t left = window / 2, right = window - left;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t > left ? t - left : 0;
    const std::size_t hi = std::min(n, t + right);
    for (std::size_t j = 0; j < d; ++j) {
      const double mean = (prefix[hi * d + j] - prefix[lo * d + j]) / static_cast<double>(hi - lo);
      out.values[t * d + j] = features.at(t, j) - mean;
    }
  }
  return out;
}

Manifest::Manifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.utterance_id).second) {
      throw ConfigError("duplicate utterance id '" + e.utterance_id + "' in manifest");
    }
  }
}

Manifest Manifest::Parse(std::string_view text, const std::string& base_dir) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  ForEachLine(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = SplitWhitespace(line);
    if (toks.size() != 3) {
      throw ParseError("manifest line " + std::to_string(line_no) +
                       ": expected 'utterance-id speaker-id path'");
    }
    if (!seen.insert(toks[0]).second) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": duplicate utterance id '" +
                       toks[0] + "'");
    }
    fs::path p(toks[2]);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    entries.push_back({toks[0], toks[1], p.lexically_normal().string()});
  });
  return Manifest(std::move(entries));
}

Manifest Manifest::Read(const std::string& path) {
  const std::string text = ReadFileBytes(path);
  Manifest m = Parse(text, fs::path(path).parent_path().string());
  for (const auto& e : m.entries_) {
    if (!fs::exists(e.path)) {
      throw IoError("manifest " + path + ": feature file for '" + e.utterance_id +
                    "' not found: " + e.path);
    }
  }
  return m;
}

std::string Manifest::ToText() const {
  std::string out;
  for (const auto& e : entries_) out += e.utterance_id + " " + e.speaker_id + " " + e.path + "\n";
  return out;
}

void Manifest::Write(const std::string& path) const { WriteFileAtomic(path, ToText()); }

std::vector<std::string> Manifest::Speakers() const {
  std::set<std::string> s;
  for (const auto& e : entries_) s.insert(e.speaker_id);
  return {s.begin(), s.end()};
}

std::map<std::string, std::string> Manifest::SpeakerOf() const {
  std::map<std::string, std::string> m;
  for (const auto& e : entries_) m[e.utterance_id] = e.speaker_id;
  return m;
}

const ManifestEntry* Manifest::Find(const std::string& utterance_id) const {
  for (const auto& e : entries_) {
    if (e.utterance_id == utterance_id) return &e;
  }
  return nullptr;
}

std::pair<Manifest, Manifest> SplitBySpeaker(const Manifest& manifest,
                                             std::size_t num_eval_speakers) {
  const auto speakers = manifest.Speakers();
  if (num_eval_speakers >= speakers.size()) {
    throw ConfigError("cannot hold out " + std::to_string(num_eval_speakers) + " of " +
                      std::to_string(speakers.size()) + " speakers");
  }
  const std::set<std::string> eval(speakers.end() - num_eval_speakers, speakers.end());
  std::vector<ManifestEntry> a, b;
  for (const auto& e : manifest.entries()) (eval.count(e.speaker_id) ? b : a).push_back(e);
  return {Manifest(std::move(a)), Manifest(std::move(b))};
}

void SyntheticSpec::Validate() const {
  if (num_speakers == 0 || utterances_per_speaker == 0 || frames_per_utterance == 0 ||
      feature_dim == 0) {
    throw ConfigError("synthetic spec: counts and dimensions must be positive");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("synthetic spec: rho must lie in [0, 1)");
  if (!(separation >= 0.0) || !(noise >= 0.0)) {
    throw ConfigError("synthetic spec: separation and noise must be non-negative");
  }
}

namespace {

std::string SpeakerName(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04zu", s);
  return buf;
}

std::string UtteranceName(std::size_t s, std::size_t u) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%04zu-utt%03zu", s, u);
  return buf;
}

}  // namespace

std::vector<std::vector<double>> SyntheticSpeakerMeans(const SyntheticSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(spec.num_speakers, std::vector<double>(spec.feature_dim));
  for (auto& m : means) {
    for (auto& v : m) v = spec.separation * normal(rng);
  }
  return means;
}

std::vector<SyntheticUtterance> GenerateSyntheticCorpus(const SyntheticSpec& spec) {
  const auto means = SyntheticSpeakerMeans(spec);
  const std::size_t d = spec.feature_dim, n = spec.frames_per_utterance;
  std::vector<SyntheticUtterance> out;
  out.reserve(spec.num_speakers * spec.utterances_per_speaker);
  for (std::size_t s = 0; s < spec.num_speakers; ++s) {
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      // Independent stream per utterance so files can be produced in any order.
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                        static_cast<std::uint32_t>(spec.seed >> 32),
                        static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(u), 0x5eedu};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal(0.0, 1.0);
      SyntheticUtterance utt;
      utt.speaker_id = SpeakerName(s);
      utt.features.utterance_id = UtteranceName(s, u);
      utt.features.num_frames = n;
      utt.features.dim = d;
      utt.features.values.resize(n * d);
      std::vector<double> prev = means[s];
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
          const double x = means[s][j] + spec.rho * (prev[j] - means[s][j]) + spec.noise * normal(rng);
          utt.features.values[t * d + j] = x;
          prev[j] = x;
        }
      }
      out.push_back(std::move(utt));
    }
  }
  return out;
}

Manifest GenerateSynthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  const auto corpus = GenerateSyntheticCorpus(spec);
  const fs::path feats = fs::path(out_dir) / "feats";
  std::error_code ec;
  fs::create_directories(feats, ec);
  if (ec) throw IoError("cannot create " + feats.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  for (const auto& u : corpus) {
    const std::string name = u.features.utterance_id + ".feat";
    WriteFeatures(u.features, (feats / name).string());
    entries.push_back({u.features.utterance_id, u.speaker_id, "feats/" + name});
  }
  Manifest rel(std::move(entries));
  WriteFileAtomic((fs::path(out_dir) / "manifest.txt").string(), rel.ToText());
  return Manifest::Read((fs::path(out_dir) / "manifest.txt").string());
}

std::vector<Trial> ParseTrials(std::string_view text) {
  std::vector<Trial> trials;
  ForEachLine(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = SplitWhitespace(line);
    if (toks.size() != 3 || (toks[2] != "target" && toks[2] != "nontarget")) {
      throw ParseError("trial line " + std::to_string(line_no) +
                       ": expected 'enroll-id test-id target|nontarget'");
    }
    trials.push_back({toks[0], toks[1], toks[2] == "target"});
  });
  return trials;
}

std::vector<Trial> LoadTrials(const std::string& path) {
  try {
    return ParseTrials(ReadFileBytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string TrialsToText(const std::vector<Trial>& trials) {
  std::string out;
  for (const auto& t : trials) {
    out += t.enroll_id + " " + t.test_id + (t.target ? " target\n" : " nontarget\n");
  }
  return out;
}

void WriteTrials(const std::vector<Trial>& trials, const std::string& path) {
  WriteFileAtomic(path, TrialsToText(trials));
}

void CheckTrialIds(const std::vector<Trial>& trials,
                   const std::map<std::string, std::size_t>& known) {
  for (std::size_t i = 0; i < trials.size(); ++i) {
    for (const auto* id : {&trials[i].enroll_id, &trials[i].test_id}) {
      if (!known.count(*id)) {
        throw ReferenceError("trial " + std::to_string(i + 1) + ": unknown utterance id '" + *id +
                             "'");
      }
    }
  }
}

std::vector<Trial> MakeTrials(const Manifest& manifest, std::size_t num_target,
                              std::size_t num_nontarget, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& e : manifest.entries()) by_speaker[e.speaker_id].push_back(e.utterance_id);
  if (by_speaker.size() < 2) throw DegenerateInputError("trial generation needs two speakers");

  std::map<std::string, std::vector<std::string>> enroll, test;
  for (auto& [spk, utts] : by_speaker) {
    if (utts.size() < 2) {
      throw DegenerateInputError("speaker '" + spk + "' needs at least two utterances for trials");
    }
    std::sort(utts.begin(), utts.end());
    const std::size_t half = (utts.size() + 1) / 2;
    enroll[spk].assign(utts.begin(), utts.begin() + half);
    test[spk].assign(utts.begin() + half, utts.end());
  }

  std::vector<Trial> targets, nontargets;
  for (const auto& [es, eu] : enroll) {
    for (const auto& [ts, tu] : test) {
      for (const auto& e : eu) {
        for (const auto& t : tu) (es == ts ? targets : nontargets).push_back({e, t, es == ts});
      }
    }
  }
  std::mt19937_64 rng(seed);
  auto take = [&](std::vector<Trial>* pool, std::size_t n, const char* what) {
    if (n > pool->size()) {
      LOG(WARNING) << "requested " << n << " " << what << " trials, only " << pool->size()
                   << " available";
      n = pool->size();
    }
    std::shuffle(pool->begin(), pool->end(), rng);
    pool->resize(n);
  };
  take(&targets, num_target, "target");
  take(&nontargets, num_nontarget, "nontarget");
  std::vector<Trial> out = std::move(targets);
  out.insert(out.end(), nontargets.begin(), nontargets.end());
  std::sort(out.begin(), out.end(), [](const Trial& a, const Trial& b) {
    return std::tie(a.enroll_id, a.test_id) < std::tie(b.enroll_id, b.test_id);
  });
  return out;
}

}  // namespace mlpool
