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

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mlpool/archive.h"
#include "mlpool/data.h"
#include "mlpool/errors.h"

namespace mlpool {
namespace {

namespace fs = std::filesystem;
using ::testing::HasSubstr;

fs::path FreshDir(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("mlpool_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

FeatureMatrix RandomFeatures(std::size_t frames, std::size_t dim, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 3.0);
  FeatureMatrix f;
  f.utterance_id = "utt";
  f.num_frames = frames;
  f.dim = dim;
  f.values.resize(frames * dim);
  for (auto& v : f.values) v = normal(gen);
  return f;
}

void ExpectEqualAtFloatPrecision(const FeatureMatrix& a, const FeatureMatrix& b) {
  ASSERT_EQ(a.num_frames, b.num_frames);
  ASSERT_EQ(a.dim, b.dim);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    ASSERT_EQ(static_cast<double>(static_cast<float>(a.values[i])), b.values[i]) << i;
  }
}

FormatError::Kind DecodeErrorKind(std::string_view bytes) {
  try {
    DecodeFeatures(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return FormatError::Kind::kBadMagic;
}

TEST(FeatureFileTest, RoundTrip100x43) {
  std::mt19937_64 gen(1);
  FeatureMatrix f = RandomFeatures(100, 43, gen);
  const fs::path dir = FreshDir("roundtrip");
  const std::string path = (dir / "utt.feat").string();
  WriteFeatures(f, path);
  FeatureMatrix g = ReadFeatures(path);
  ExpectEqualAtFloatPrecision(f, g);
  EXPECT_EQ(g.utterance_id, "utt");
}

TEST(FeatureFileTest, RoundTripRandomShapes) {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<std::size_t> frames(1, 500), dims(1, 80);
  for (int i = 0; i < 40; ++i) {
    FeatureMatrix f = RandomFeatures(frames(gen), dims(gen), gen);
    ExpectEqualAtFloatPrecision(f, DecodeFeatures(EncodeFeatures(f)));
  }
}

TEST(FeatureFileTest, SingleFrameIsValid) {
  std::mt19937_64 gen(3);
  FeatureMatrix f = RandomFeatures(1, 43, gen);
  const std::string bytes = EncodeFeatures(f);
  EXPECT_EQ(bytes.size(), 4u + 12u + 43u * 4u + 4u);
  EXPECT_EQ(DecodeFeatures(bytes).num_frames, 1u);
}

TEST(FeatureFileTest, LayoutIsLittleEndianWithHeader) {
  FeatureMatrix f;
  f.num_frames = 1;
  f.dim = 2;
  f.values = {1.0, -2.0};
  const std::string bytes = EncodeFeatures(f);
  EXPECT_EQ(bytes.substr(0, 4), "EMBK");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(12, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(16, 4), std::string("\x00\x00\x80\x3f", 4));  // 1.0f
  EXPECT_EQ(bytes.substr(20, 4), std::string("\x00\x00\x00\xc0", 4));  // -2.0f
  std::string crc;
  AppendU32(&crc, Crc32(std::string_view(bytes).substr(0, 24)));
  EXPECT_EQ(bytes.substr(24), crc);
}

TEST(FeatureFileTest, LoadErrorsAreDistinct) {
  std::mt19937_64 gen(4);
  const std::string good = EncodeFeatures(RandomFeatures(10, 3, gen));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::string bad_version = good;
  bad_version[4] = 2;
  std::string bad_crc = good;
  bad_crc[20] ^= 0x01;
  EXPECT_EQ(DecodeErrorKind(bad_magic), FormatError::Kind::kBadMagic);
  EXPECT_EQ(DecodeErrorKind(bad_version), FormatError::Kind::kVersionMismatch);
  EXPECT_EQ(DecodeErrorKind(bad_crc), FormatError::Kind::kChecksum);
  for (std::size_t cut : {2u, 10u, 30u, static_cast<unsigned>(good.size() - 1)}) {
    EXPECT_EQ(DecodeErrorKind(good.substr(0, cut)), FormatError::Kind::kTruncated) << cut;
  }
}

TEST(FeatureFileTest, TruncatedFileLeavesNoMatrix) {
  std::mt19937_64 gen(5);
  const fs::path dir = FreshDir("truncated");
  const std::string path = (dir / "t.feat").string();
  const std::string bytes = EncodeFeatures(RandomFeatures(50, 4, gen));
  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  FeatureMatrix target;
  EXPECT_THROW(target = ReadFeatures(path), FormatError);
  EXPECT_EQ(target.num_frames, 0u);
  EXPECT_TRUE(target.values.empty());
}

TEST(FeatureFileTest, ParsesTextMatrix) {
  FeatureMatrix f = ParseTextFeatures("1 2 3\n# comment\n4 5 6\n");
  EXPECT_EQ(f.num_frames, 2u);
  EXPECT_EQ(f.dim, 3u);
  EXPECT_EQ(f.values, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  try {
    ParseTextFeatures("1 2\n3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_THAT(e.what(), HasSubstr("line 2"));
  }
}

FeatureMatrix WithEnergies(const std::vector<double>& energies) {
  FeatureMatrix f;
  f.num_frames = energies.size();
  f.dim = 2;
  for (std::size_t t = 0; t < energies.size(); ++t) {
    f.values.push_back(static_cast<double>(t));
    f.values.push_back(energies[t]);
  }
  return f;
}

TEST(EnergyVadTest, ConstantEnergyKeepsEverything) {
  FeatureMatrix f = WithEnergies(std::vector<double>(9, 0.3));
  EXPECT_EQ(EnergyVad(f, 1, 0.5).values, f.values);
}

TEST(EnergyVadTest, BimodalKeepsHighHalf) {
  std::vector<double> e;
  for (int t = 0; t < 10; ++t) e.push_back(t % 2 ? 10.0 : 0.0);
  FeatureMatrix out = EnergyVad(WithEnergies(e), 1, 0.0);
  ASSERT_EQ(out.num_frames, 5u);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(out.at(t, 0), 2.0 * t + 1);
    EXPECT_EQ(out.at(t, 1), 10.0);
  }
}

TEST(EnergyVadTest, MatchesDirectFilterAndIsSubsequence) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_real_distribution<double> margin(0.0, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e(40 + trial);
    for (auto& v : e) v = normal(gen);
    const double m = margin(gen);
    double mean = 0, ss = 0;
    for (double v : e) mean += v;
    mean /= e.size();
    for (double v : e) ss += (v - mean) * (v - mean);
    const double threshold = mean - m * std::sqrt(ss / e.size());
    std::vector<double> kept;
    for (std::size_t t = 0; t < e.size(); ++t) {
      if (e[t] >= threshold) kept.push_back(static_cast<double>(t));
    }
    FeatureMatrix out = EnergyVad(WithEnergies(e), 1, m);
    ASSERT_EQ(out.num_frames, kept.size());
    for (std::size_t t = 0; t < kept.size(); ++t) {
      EXPECT_EQ(out.at(t, 0), kept[t]);
      EXPECT_EQ(out.at(t, 1), e[static_cast<std::size_t>(kept[t])]);
    }
  }
}

TEST(EnergyVadTest, RemovingAllFramesIsAnError) {
  FeatureMatrix f = WithEnergies({0.0, 1.0, 2.0});
  EXPECT_THROW(EnergyVad(f, 1, -10.0), DegenerateInputError);
  EXPECT_THROW(EnergyVad(f, 2, 0.5), DimensionError);
}

TEST(SlidingMeanTest, ConstantInputBecomesZero) {
  FeatureMatrix f = WithEnergies(std::vector<double>(20, 4.0));
  for (std::size_t t = 0; t < 20; ++t) f.values[2 * t] = 1.5;
  for (double v : SlidingMeanNormalize(f, 7).values) EXPECT_EQ(v, 0.0);
}

TEST(SlidingMeanTest, MatchesWindowedMeanLoop) {
  std::mt19937_64 gen(7);
  FeatureMatrix f = RandomFeatures(50, 3, gen);
  const std::size_t window = 10;
  FeatureMatrix out = SlidingMeanNormalize(f, window);
  for (std::size_t t = 0; t < 50; ++t) {
    const std::size_t lo = t >= window / 2 ? t - window / 2 : 0;
    const std::size_t hi = std::min<std::size_t>(50, t + window - window / 2);
    for (std::size_t j = 0; j < 3; ++j) {
      double sum = 0;
      for (std::size_t k = lo; k < hi; ++k) sum += f.at(k, j);
      EXPECT_NEAR(out.at(t, j), f.at(t, j) - sum / (hi - lo), 1e-12);
    }
  }
  // A window covering the whole utterance removes the global mean.
  FeatureMatrix global = SlidingMeanNormalize(f, 1000);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t t = 0; t < 50; ++t) s += global.at(t, j);
    EXPECT_NEAR(s, 0.0, 1e-10);
  }
}

TEST(SyntheticTest, ZeroSeparationGivesCoincidentMeans) {
  SyntheticSpec spec;
  spec.num_speakers = 4;
  spec.feature_dim = 5;
  spec.separation = 0.0;
  for (const auto& m : SyntheticSpeakerMeans(spec)) {
    for (double v : m) EXPECT_EQ(v, 0.0);
  }
}

TEST(SyntheticTest, IidFramesConvergeToSpeakerMean) {
  SyntheticSpec spec;
  spec.num_speakers = 3;
  spec.utterances_per_speaker = 2;
  spec.frames_per_utterance = 2000;
  spec.feature_dim = 6;
  spec.separation = 2.0;
  spec.rho = 0.0;
  spec.noise = 1.5;
  spec.seed = 9;
  const auto means = SyntheticSpeakerMeans(spec);
  const auto corpus = GenerateSyntheticCorpus(spec);
  ASSERT_EQ(corpus.size(), 6u);
  const double bound = 3.0 * spec.noise / std::sqrt(static_cast<double>(spec.frames_per_utterance));
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    const auto& f = corpus[u].features;
    const auto& m = means[u / spec.utterances_per_speaker];
    for (std::size_t j = 0; j < f.dim; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < f.num_frames; ++t) s += f.at(t, j);
      EXPECT_LT(std::abs(s / f.num_frames - m[j]), bound);
    }
  }
}

TEST(SyntheticTest, Ar1RecursionHoldsExactlyWithoutNoise) {
  SyntheticSpec spec;
  spec.num_speakers = 2;
  spec.utterances_per_speaker = 1;
  spec.frames_per_utterance = 5;
  spec.feature_dim = 3;
  spec.noise = 0.0;
  const auto means = SyntheticSpeakerMeans(spec);
  for (const auto& u : GenerateSyntheticCorpus(spec)) {
    const auto& m = means[u.speaker_id == "spk0000" ? 0 : 1];
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(u.features.at(4, j), m[j]);
  }
}

TEST(SyntheticTest, SameSeedGivesIdenticalFiles) {
  SyntheticSpec spec;
  spec.num_speakers = 3;
  spec.utterances_per_speaker = 2;
  spec.frames_per_utterance = 40;
  spec.feature_dim = 4;
  spec.seed = 7;
  const fs::path a = FreshDir("gen_a"), b = FreshDir("gen_b");
  Manifest ma = GenerateSynthetic(spec, a.string());
  Manifest mb = GenerateSynthetic(spec, b.string());
  ASSERT_EQ(ma.size(), 6u);
  for (std::size_t i = 0; i < ma.size(); ++i) {
    EXPECT_EQ(ma.entries()[i].utterance_id, mb.entries()[i].utterance_id);
    EXPECT_EQ(ReadFileBytes(ma.entries()[i].path), ReadFileBytes(mb.entries()[i].path));
  }
  spec.seed = 8;
  const fs::path c = FreshDir("gen_c");
  Manifest mc = GenerateSynthetic(spec, c.string());
  EXPECT_NE(ReadFileBytes(ma.entries()[0].path), ReadFileBytes(mc.entries()[0].path));
}

TEST(SyntheticTest, UnwritableDirectoryIsIoError) {
  const fs::path dir = FreshDir("blocked");
  const fs::path file = dir / "plain_file";
  std::ofstream(file) << "x";
  SyntheticSpec spec;
  spec.num_speakers = 2;
  spec.utterances_per_speaker = 1;
  spec.frames_per_utterance = 3;
  spec.feature_dim = 2;
  EXPECT_THROW(GenerateSynthetic(spec, (file / "sub").string()), IoError);
}

TEST(SyntheticTest, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.rho = 1.0;
  EXPECT_THROW(spec.Validate(), ConfigError);
  spec.rho = 0.5;
  spec.num_speakers = 0;
  EXPECT_THROW(spec.Validate(), ConfigError);
}

TEST(ManifestTest, ParseResolvesRelativePaths) {
  Manifest m = Manifest::Parse("u1 s1 feats/u1.feat\nu2 s2 /abs/u2.feat\n", "/data");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.entries()[0].path, "/data/feats/u1.feat");
  EXPECT_EQ(m.entries()[1].path, "/abs/u2.feat");
  EXPECT_EQ(m.Speakers(), (std::vector<std::string>{"s1", "s2"}));
}

TEST(ManifestTest, DuplicateIdsAndMissingFilesRejected) {
  EXPECT_THROW(Manifest::Parse("u1 s1 a\nu1 s2 b\n", ""), ParseError);
  EXPECT_THROW(Manifest::Parse("u1 s1\n", ""), ParseError);
  const fs::path dir = FreshDir("manifest");
  std::ofstream(dir / "manifest.txt") << "u1 s1 missing.feat\n";
  EXPECT_THROW(Manifest::Read((dir / "manifest.txt").string()), IoError);
}

TEST(ManifestTest, SplitBySpeakerHoldsOutLastSpeakers) {
  Manifest m = Manifest::Parse("a1 A x\nb1 B x\nc1 C x\nc2 C x\n", "");
  auto [train, eval] = SplitBySpeaker(m, 1);
  EXPECT_EQ(train.Speakers(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(eval.size(), 2u);
  EXPECT_THROW(SplitBySpeaker(m, 3), ConfigError);
}

TEST(TrialsTest, ParsesSingleTarget) {
  auto trials = ParseTrials("u1 u2 target\n");
  ASSERT_EQ(trials.size(), 1u);
  EXPECT_EQ(trials[0], (Trial{"u1", "u2", true}));
}

TEST(TrialsTest, MalformedLineReportsLineNumber) {
  try {
    ParseTrials("u1 u2 target\nu3 u4 maybe\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_THAT(e.what(), HasSubstr("line 2"));
  }
}

TEST(TrialsTest, GeneratorTwoByTwo) {
  Manifest m = Manifest::Parse("a1 A x\na2 A x\nb1 B x\nb2 B x\n", "");
  auto trials = MakeTrials(m, 2, 2, 1);
  ASSERT_EQ(trials.size(), 4u);
  const auto spk = m.SpeakerOf();
  std::size_t targets = 0;
  for (const auto& t : trials) {
    EXPECT_NE(t.enroll_id, t.test_id);
    EXPECT_EQ(t.target, spk.at(t.enroll_id) == spk.at(t.test_id));
    targets += t.target;
  }
  EXPECT_EQ(targets, 2u);
}

TEST(TrialsTest, EnrollAndTestUtterancesAreDisjoint) {
  std::string text;
  for (char s : {'A', 'B', 'C'}) {
    for (int u = 0; u < 5; ++u) text += std::string(1, s) + std::to_string(u) + " " + s + " x\n";
  }
  auto trials = MakeTrials(Manifest::Parse(text, ""), 100, 100, 3);
  std::set<std::string> enroll, test;
  for (const auto& t : trials) {
    enroll.insert(t.enroll_id);
    test.insert(t.test_id);
  }
  for (const auto& e : enroll) EXPECT_EQ(test.count(e), 0u) << e;
}

TEST(TrialsTest, WriteLoadRoundTrip) {
  Manifest m = Manifest::Parse("a1 A x\na2 A x\na3 A x\nb1 B x\nb2 B x\nc1 C x\nc2 C x\n", "");
  auto trials = MakeTrials(m, 5, 5, 4);
  const fs::path dir = FreshDir("trials");
  WriteTrials(trials, (dir / "trials.txt").string());
  EXPECT_EQ(LoadTrials((dir / "trials.txt").string()), trials);
}

TEST(TrialsTest, UnknownIdIsReferenceError) {
  std::map<std::string, std::size_t> known = {{"u1", 0}, {"u2", 1}};
  CheckTrialIds(ParseTrials("u1 u2 target\n"), known);
  try {
    CheckTrialIds(ParseTrials("u1 u9 nontarget\n"), known);
    FAIL();
  } catch (const ReferenceError& e) {
    EXPECT_THAT(e.what(), HasSubstr("u9"));
  }
}

}  // namespace
}  // namespace mlpool
