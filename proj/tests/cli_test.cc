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

// Drives the mlpool binary end to end through std::system.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"

#include "mlpool/archive.h"

namespace mlpool {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int status;
  std::string output;  // stdout and stderr
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("mlpool_cli_") + info->name() + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  RunResult Run(const std::string& args) const {
    const std::string log = Path("cmd.log");
    const std::string cmd = std::string(MLPOOL_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r{WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ReadFileBytes(log)};
    return r;
  }

  void MustRun(const std::string& args) const {
    const RunResult r = Run(args);
    ASSERT_EQ(r.status, 0) << args << "\n" << r.output;
  }

  // 4 speakers x 4 utterances, well separated so tiny models learn quickly.
  void MakeCorpus(const std::string& name, double separation = 3.0) const {
    MustRun("gen-data --create --out " + Path(name) +
            " --speakers 4 --utts 4 --frames 60 --dim 8 --seed 3 --separation " +
            std::to_string(separation));
  }

  fs::path dir_;
};

std::size_t CountLines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

constexpr char kTinyXvector[] =
    " --model x-vector --set tdnn=8/5/1,8/3/2,8/3/3 --set head_hidden=8"
    " --set head_widths=16 --set embedding_dim=8 --chunk-len 20 --batch-size 4"
    " --epochs 2 --seed 5";

TEST_F(CliTest, GenDataWritesOneFilePerUtteranceDeterministically) {
  MustRun("gen-data --create --out " + Path("a") + " --speakers 20 --utts 10 --frames 30 --seed 9");
  MustRun("gen-data --create --out " + Path("b") + " --speakers 20 --utts 10 --frames 30 --seed 9");
  const std::string manifest = ReadFileBytes(Path("a/manifest.txt"));
  EXPECT_EQ(CountLines(manifest), 200u);
  EXPECT_EQ(manifest, ReadFileBytes(Path("b/manifest.txt")));
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(Path("a/feats"))) {
    ++files;
    const auto other = Path("b/feats/") + entry.path().filename().string();
    EXPECT_EQ(ReadFileBytes(entry.path().string()), ReadFileBytes(other)) << entry.path();
  }
  EXPECT_EQ(files, 200u);
  EXPECT_TRUE(fs::exists(Path("a/gen-data.config")));
}

TEST_F(CliTest, GenDataRefusesMissingDirectoryWithoutCreate) {
  const RunResult r = Run("gen-data --out " + Path("missing") + " --speakers 2 --utts 2");
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(Path("missing")));
}

TEST_F(CliTest, UnknownModelIsAUsageErrorListingTopologies) {
  MakeCorpus("data");
  const RunResult r =
      Run("train --manifest " + Path("data/manifest.txt") + " --out " + Path("m") + " --model Q");
  EXPECT_EQ(r.status, 2);
  for (const char* name : {"x-vector", "A", "B", "MP"}) {
    EXPECT_NE(r.output.find(name), std::string::npos) << r.output;
  }
}

TEST_F(CliTest, MissingRequiredOptionIsAUsageError) {
  EXPECT_EQ(Run("score --backend x").status, 2);
  EXPECT_EQ(Run("no-such-command").status, 2);
}

TEST_F(CliTest, BadOverrideIsAConfigError) {
  MakeCorpus("data");
  const RunResult r = Run("train --manifest " + Path("data/manifest.txt") + " --out " +
                          Path("m") + " --set no_such_key=1");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("no_such_key"), std::string::npos) << r.output;
}

TEST_F(CliTest, FullPipelineWritesSnapshotsAndReports) {
  MakeCorpus("data");
  const std::string manifest = Path("data/manifest.txt");
  MustRun("train --manifest " + manifest + " --out " + Path("model.ckpt") + kTinyXvector);
  MustRun("extract --checkpoint " + Path("model.ckpt") + " --manifest " + manifest + " --out " +
          Path("emb.txt"));
  EXPECT_EQ(CountLines(ReadFileBytes(Path("emb.txt"))), 16u);
  EXPECT_EQ(ReadFileBytes(Path("emb.txt.skipped")), "");
  MustRun("backend --embeddings " + Path("emb.txt") + " --manifest " + manifest + " --out " +
          Path("backend") + " --lda-dim 3");
  MustRun("adapt --backend " + Path("backend") + " --embeddings " + Path("emb.txt") + " --out " +
          Path("adapted"));
  MustRun("make-trials --manifest " + manifest + " --out " + Path("trials") +
          " --targets 16 --nontargets 40 --seed 1");
  MustRun("score --backend " + Path("adapted") + " --embeddings " + Path("emb.txt") +
          " --trials " + Path("trials") + " --out " + Path("scores"));
  const RunResult ev = Run("eval --scores " + Path("scores") + " --trials " + Path("trials") +
                           " --out " + Path("report") + " --det-out " + Path("det"));
  ASSERT_EQ(ev.status, 0) << ev.output;
  const std::string report = ReadFileBytes(Path("report"));
  EXPECT_NE(report.find("eer="), std::string::npos);
  EXPECT_NE(report.find("min_dcf@0.01="), std::string::npos);
  EXPECT_NE(report.find("min_dcf@0.005="), std::string::npos);
  EXPECT_NE(ev.output.find("EER:"), std::string::npos);
  EXPECT_GT(CountLines(ReadFileBytes(Path("det"))), 1u);
  for (const char* out : {"model.ckpt", "emb.txt", "backend", "adapted", "trials", "scores",
                          "report"}) {
    const std::string snap = Path(out) + ".config";
    ASSERT_TRUE(fs::exists(snap)) << snap;
    EXPECT_EQ(ReadFileBytes(snap).rfind("# mlpool ", 0), 0u) << snap;
  }
}

TEST_F(CliTest, TrainSnapshotIsAcceptedAsConfig) {
  MakeCorpus("data");
  const std::string manifest = Path("data/manifest.txt");
  MustRun("train --manifest " + manifest + " --out " + Path("a.ckpt") + kTinyXvector);
  MustRun("train --manifest " + manifest + " --out " + Path("b.ckpt") + " --config " +
          Path("a.ckpt.config"));
  EXPECT_EQ(ReadFileBytes(Path("a.ckpt")), ReadFileBytes(Path("b.ckpt")));
}

TEST_F(CliTest, ExtractionIsDeterministicAndReportsShortUtterances) {
  MakeCorpus("data");
  const std::string manifest = Path("data/manifest.txt");
  MustRun("train --manifest " + manifest + " --out " + Path("model.ckpt") + kTinyXvector);

  // Append a 3-frame utterance, shorter than the network's context.
  {
    std::ofstream text(Path("short.txt"));
    for (int t = 0; t < 3; ++t) text << "0 1 2 3 4 5 6 7\n";
  }
  MustRun("convert-features --in " + Path("short.txt") + " --out " + Path("shorty.feat"));
  std::string lines = ReadFileBytes(manifest);
  lines += "shorty spk0000 " + Path("shorty.feat") + "\n";
  WriteFileAtomic(Path("data/with_short.txt"), lines);

  for (const char* out : {"e1.bin", "e2.bin"}) {
    MustRun("extract --checkpoint " + Path("model.ckpt") + " --manifest " +
            Path("data/with_short.txt") + " --out " + Path(out));
  }
  EXPECT_EQ(ReadFileBytes(Path("e1.bin")), ReadFileBytes(Path("e2.bin")));
  EXPECT_EQ(ReadFileBytes(Path("e1.bin.skipped")), "shorty too-short 3\n");
}

TEST_F(CliTest, LargerSeparationGivesLowerEer) {
  auto eer = [&](const std::string& tag, double separation) {
    const std::string data = tag + "_data";
    MustRun("gen-data --create --out " + Path(data) +
            " --speakers 6 --utts 6 --frames 80 --dim 8 --seed 4 --separation " +
            std::to_string(separation));
    const std::string manifest = Path(data + "/manifest.txt");
    MustRun("train --manifest " + manifest + " --out " + Path(tag + ".ckpt") + kTinyXvector);
    MustRun("extract --checkpoint " + Path(tag + ".ckpt") + " --manifest " + manifest +
            " --out " + Path(tag + ".emb"));
    MustRun("backend --embeddings " + Path(tag + ".emb") + " --manifest " + manifest +
            " --out " + Path(tag + ".backend") + " --lda-dim 4");
    MustRun("make-trials --manifest " + manifest + " --out " + Path(tag + ".trials") +
            " --targets 200 --nontargets 1000 --seed 2");
    MustRun("score --backend " + Path(tag + ".backend") + " --embeddings " + Path(tag + ".emb") +
            " --trials " + Path(tag + ".trials") + " --out " + Path(tag + ".scores"));
    MustRun("eval --scores " + Path(tag + ".scores") + " --trials " + Path(tag + ".trials") +
            " --out " + Path(tag + ".report"));
    const std::string report = ReadFileBytes(Path(tag + ".report"));
    const auto at = report.find("\neer=");
    return std::stod(report.substr(at + 5));
  };
  const double wide = eer("wide", 3.0), narrow = eer("narrow", 0.1);
  EXPECT_LT(wide, narrow);
}

TEST_F(CliTest, EvalOnSeparableScoresGivesZeroEer) {
  WriteFileAtomic(Path("trials"), "a x target\nb y target\na y nontarget\nb x nontarget\n");
  WriteFileAtomic(Path("scores"), "a x 5\nb y 4\na y -1\nb x 0.5\n");
  const RunResult r =
      Run("eval --scores " + Path("scores") + " --trials " + Path("trials") + " --out " +
          Path("report"));
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string report = ReadFileBytes(Path("report"));
  EXPECT_NE(report.find("\neer=0\n"), std::string::npos) << report;
  EXPECT_NE(report.find("min_dcf@0.01=0\n"), std::string::npos) << report;
  EXPECT_NE(report.find("min_dcf@0.005=0\n"), std::string::npos) << report;
}

TEST_F(CliTest, EvalNamesTrialWithoutScore) {
  WriteFileAtomic(Path("trials"), "a x target\nb y nontarget\n");
  WriteFileAtomic(Path("scores"), "a x 5\n");
  const RunResult r =
      Run("eval --scores " + Path("scores") + " --trials " + Path("trials") + " --out " +
          Path("report"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("b y"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(Path("report")));
}

TEST_F(CliTest, ScoreNamesMissingEmbedding) {
  MakeCorpus("data");
  const std::string manifest = Path("data/manifest.txt");
  MustRun("train --manifest " + manifest + " --out " + Path("model.ckpt") + kTinyXvector);
  MustRun("extract --checkpoint " + Path("model.ckpt") + " --manifest " + manifest + " --out " +
          Path("emb.txt"));
  MustRun("backend --embeddings " + Path("emb.txt") + " --manifest " + manifest + " --out " +
          Path("backend") + " --lda-dim 3");
  WriteFileAtomic(Path("trials"), "spk0000-utt000 ghost nontarget\n");
  const RunResult r = Run("score --backend " + Path("backend") + " --embeddings " +
                          Path("emb.txt") + " --trials " + Path("trials") + " --out " +
                          Path("scores"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("ghost"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(Path("scores")));
}

TEST_F(CliTest, LdaDimensionAboveSpeakerCountIsAConfigError) {
  MakeCorpus("data");
  const std::string manifest = Path("data/manifest.txt");
  MustRun("train --manifest " + manifest + " --out " + Path("model.ckpt") + kTinyXvector);
  MustRun("extract --checkpoint " + Path("model.ckpt") + " --manifest " + manifest + " --out " +
          Path("emb.txt"));
  const RunResult r = Run("backend --embeddings " + Path("emb.txt") + " --manifest " + manifest +
                          " --out " + Path("backend"));
  EXPECT_EQ(r.status, 2) << r.output;
}

}  // namespace
}  // namespace mlpool
