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

// Batch command-line front end: one subcommand per pipeline stage.
//
//   mlpool gen-data --out DIR [--create] [--speakers N --utts N --frames N --seed S ...]
//   mlpool convert-features --in MATRIX.txt --out UTT.feat
//   mlpool make-trials --manifest M --out TRIALS [--targets N --nontargets N --seed S]
//   mlpool train --manifest M --out CKPT [--model x-vector|A|B|MP] [--lambda L]
//                [--config FILE] [--set key=value ...]
//   mlpool extract --checkpoint CKPT --manifest M --out EMB
//   mlpool backend --embeddings EMB --manifest M --out BACKEND [--lda-dim P]
//   mlpool adapt --backend BACKEND --embeddings EMB --out BACKEND
//   mlpool score --backend BACKEND --embeddings EMB --trials TRIALS --out SCORES
//   mlpool eval --scores SCORES --trials TRIALS --out REPORT [--p-target P ...]
//
// Every subcommand writes "<primary output>.config" (gen-data:
// DIR/gen-data.config) holding its resolved settings as "key = value" lines;
// the snapshot of train is accepted back by --config. All outputs are
// written to a temporary file and renamed on success. The exit status is 0
// on success, 1 on a runtime error and 2 on a usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glog/logging.h"

#include "mlpool/archive.h"
#include "mlpool/backend.h"
#include "mlpool/data.h"
#include "mlpool/errors.h"
#include "mlpool/metrics.h"
#include "mlpool/model.h"
#include "mlpool/train.h"

namespace mlpool {
namespace {

namespace fs = std::filesystem;

using Settings = std::vector<std::pair<std::string, std::string>>;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string Format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// "key = value" lines; '#' starts a comment.
Settings ParseSettings(const std::string& text, const std::string& origin) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (Trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + " line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    out.emplace_back(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
  }
  return out;
}

void WriteSnapshot(const std::string& path, const std::string& command, const Settings& settings) {
  std::string text = "# mlpool " + command + "\n";
  for (const auto& [k, v] : settings) text += k + " = " + v + "\n";
  WriteFileAtomic(path, text);
}

std::string SnapshotPath(const std::string& output) { return output + ".config"; }

// Optional per-utterance preprocessing shared by train and extract.
struct Frontend {
  int vad_column = -1;  // < 0 disables VAD
  double vad_margin = 0.5;
  std::size_t cmn_window = 0;  // 0 disables sliding mean normalization

  void AddOptions(CLI::App* app) {
    app->add_option("--vad-column", vad_column, "Energy column for VAD (-1: off)");
    app->add_option("--vad-margin", vad_margin, "VAD margin in standard deviations");
    app->add_option("--cmn-window", cmn_window, "Sliding mean normalization window (0: off)");
  }

  FeatureMatrix Apply(FeatureMatrix f) const {
    if (vad_column >= 0) f = EnergyVad(f, static_cast<std::size_t>(vad_column), vad_margin);
    if (cmn_window > 0) f = SlidingMeanNormalize(f, cmn_window);
    return f;
  }

  void Record(Settings* s) const {
    s->emplace_back("vad_column", std::to_string(vad_column));
    s->emplace_back("vad_margin", Format(vad_margin));
    s->emplace_back("cmn_window", std::to_string(cmn_window));
  }
};

// ------------------------------------------------------------------ gen-data

struct GenDataArgs {
  std::string out;
  bool create = false;
  SyntheticSpec spec;
};

void RunGenData(const GenDataArgs& a) {
  if (!fs::is_directory(a.out)) {
    if (!a.create) {
      throw IoError("output directory " + a.out + " does not exist (pass --create to make it)");
    }
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  }
  a.spec.Validate();
  const Manifest m = GenerateSynthetic(a.spec, a.out);
  const Settings s = {{"out", a.out},
                      {"speakers", std::to_string(a.spec.num_speakers)},
                      {"utts", std::to_string(a.spec.utterances_per_speaker)},
                      {"frames", std::to_string(a.spec.frames_per_utterance)},
                      {"dim", std::to_string(a.spec.feature_dim)},
                      {"separation", Format(a.spec.separation)},
                      {"rho", Format(a.spec.rho)},
                      {"noise", Format(a.spec.noise)},
                      {"seed", std::to_string(a.spec.seed)}};
  WriteSnapshot((fs::path(a.out) / "gen-data.config").string(), "gen-data", s);
  LOG(INFO) << "wrote " << m.size() << " utterances of " << m.Speakers().size()
            << " speakers to " << a.out;
}

// ------------------------------------------------------------------ convert-features

struct ConvertArgs {
  std::string in;
  std::string out;
};

void RunConvert(const ConvertArgs& a) {
  FeatureMatrix f = ParseTextFeatures(ReadFileBytes(a.in));
  f.utterance_id = fs::path(a.out).stem().string();
  WriteFeatures(f, a.out);
  WriteSnapshot(SnapshotPath(a.out), "convert-features", {{"in", a.in}, {"out", a.out}});
  LOG(INFO) << "wrote " << f.num_frames << " x " << f.dim << " features to " << a.out;
}

// ------------------------------------------------------------------ make-trials

struct MakeTrialsArgs {
  std::string manifest;
  std::string out;
  std::size_t targets = 1000;
  std::size_t nontargets = 10000;
  std::uint64_t seed = 0;
};

void RunMakeTrials(const MakeTrialsArgs& a) {
  const auto trials = MakeTrials(Manifest::Read(a.manifest), a.targets, a.nontargets, a.seed);
  WriteTrials(trials, a.out);
  WriteSnapshot(SnapshotPath(a.out), "make-trials",
                {{"manifest", a.manifest},
                 {"out", a.out},
                 {"targets", std::to_string(a.targets)},
                 {"nontargets", std::to_string(a.nontargets)},
                 {"seed", std::to_string(a.seed)}});
  LOG(INFO) << "wrote " << trials.size() << " trials to " << a.out;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string config;
  std::string resume;
  std::string model;
  std::vector<std::string> overrides;
  TrainerOptions options;
  Frontend frontend;
  CLI::App* app = nullptr;
};

std::size_t ParseSize(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long r = 0;
  try {
    r = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(r);
}

double ParseReal(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double r = 0.0;
  try {
    r = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  return r;
}

// Applies a trainer or frontend key; returns false for anything else.
bool ApplyTrainerKey(const std::string& k, const std::string& v, TrainerOptions* o, Frontend* f) {
  if (k == "epochs") o->epochs = ParseSize(k, v);
  else if (k == "chunk_len") o->chunk_len = ParseSize(k, v);
  else if (k == "batch_size") o->batch_size = ParseSize(k, v);
  else if (k == "chunks_per_utterance") o->chunks_per_utterance = ParseSize(k, v);
  else if (k == "learning_rate") o->learning_rate = ParseReal(k, v);
  else if (k == "momentum") o->momentum = ParseReal(k, v);
  else if (k == "lr_decay") o->lr_decay = ParseReal(k, v);
  else if (k == "lr_decay_epochs") o->lr_decay_epochs = ParseSize(k, v);
  else if (k == "lambda") o->lambda = ParseReal(k, v);
  else if (k == "seed") o->seed = ParseSize(k, v);
  else if (k == "queue_capacity") o->queue_capacity = ParseSize(k, v);
  else if (k == "checkpoint_every") o->checkpoint_every = ParseSize(k, v);
  else if (k == "log_every") o->log_every = ParseSize(k, v);
  else if (k == "vad_column") f->vad_column = static_cast<int>(ParseReal(k, v));
  else if (k == "vad_margin") f->vad_margin = ParseReal(k, v);
  else if (k == "cmn_window") f->cmn_window = ParseSize(k, v);
  else return false;
  return true;
}

Settings TrainerSettings(const TrainerOptions& o, const Frontend& f) {
  Settings s = {{"epochs", std::to_string(o.epochs)},
                {"chunk_len", std::to_string(o.chunk_len)},
                {"batch_size", std::to_string(o.batch_size)},
                {"chunks_per_utterance", std::to_string(o.chunks_per_utterance)},
                {"learning_rate", Format(o.learning_rate)},
                {"momentum", Format(o.momentum)},
                {"lr_decay", Format(o.lr_decay)},
                {"lr_decay_epochs", std::to_string(o.lr_decay_epochs)},
                {"lambda", Format(o.lambda)},
                {"seed", std::to_string(o.seed)},
                {"queue_capacity", std::to_string(o.queue_capacity)},
                {"checkpoint_every", std::to_string(o.checkpoint_every)},
                {"log_every", std::to_string(o.log_every)}};
  f.Record(&s);
  return s;
}

void RunTrain(TrainArgs a) {
  // Precedence: built-in defaults < config file < explicit flags < --set.
  std::string config_path = a.config;
  if (config_path.empty()) {
    if (const char* env = std::getenv("MLPOOL_CONFIG"); env != nullptr && *env != '\0') {
      config_path = env;
    }
  }
  Settings layered;
  if (!config_path.empty()) {
    LOG(INFO) << "reading config " << config_path;
    layered = ParseSettings(ReadFileBytes(config_path), config_path);
  }
  TrainerOptions opts;
  Frontend frontend;
  std::string model_name = "x-vector";
  Settings model_keys;
  auto apply = [&](const Settings& settings) {
    for (const auto& [k, v] : settings) {
      if (k == "name" || k == "model") {
        model_name = v;
      } else if (!ApplyTrainerKey(k, v, &opts, &frontend)) {
        model_keys.emplace_back(k, v);
      }
    }
  };
  apply(layered);
  // Explicit flags.
  auto given = [&](const char* flag) { return a.app->count(flag) > 0; };
  if (given("--model")) model_name = a.model;
  if (given("--lambda")) opts.lambda = a.options.lambda;
  if (given("--epochs")) opts.epochs = a.options.epochs;
  if (given("--chunk-len")) opts.chunk_len = a.options.chunk_len;
  if (given("--batch-size")) opts.batch_size = a.options.batch_size;
  if (given("--lr")) opts.learning_rate = a.options.learning_rate;
  if (given("--momentum")) opts.momentum = a.options.momentum;
  if (given("--seed")) opts.seed = a.options.seed;
  if (given("--checkpoint-every")) opts.checkpoint_every = a.options.checkpoint_every;
  if (given("--vad-column")) frontend.vad_column = a.frontend.vad_column;
  if (given("--vad-margin")) frontend.vad_margin = a.frontend.vad_margin;
  if (given("--cmn-window")) frontend.cmn_window = a.frontend.cmn_window;
  Settings sets;
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    sets.emplace_back(Trim(kv.substr(0, eq)), Trim(kv.substr(eq + 1)));
  }
  apply(sets);
  opts.Validate();

  const Manifest manifest = Manifest::Read(a.manifest);
  std::vector<std::string> speakers;
  std::vector<LabeledUtterance> data = LoadLabeledSet(manifest, &speakers);
  if (data.empty()) throw DegenerateInputError("manifest " + a.manifest + " is empty");
  for (auto& u : data) u.features = frontend.Apply(std::move(u.features));

  const auto& names = ModelConfig::TopologyNames();
  if (std::find(names.begin(), names.end(), model_name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model '" + model_name + "'; valid names: " + list);
  }
  ModelConfig config = ModelConfig::Preset(model_name, speakers.size());
  config.input_dim = data[0].features.dim;
  for (const auto& [k, v] : model_keys) {
    if (k == "input_dim" || k == "num_speakers") {
      const std::size_t derived = k == "input_dim" ? config.input_dim : config.num_speakers;
      if (ParseSize(k, v) != derived) {
        throw ConfigError("'" + k + "' is derived from the data (" + std::to_string(derived) +
                          "), got " + v);
      }
      continue;
    }
    config.Set(k, v);
  }
  config.Validate();

  Settings snapshot = TrainerSettings(opts, frontend);
  for (auto& kv : ParseSettings(config.ToText(), "model config")) snapshot.push_back(std::move(kv));
  WriteSnapshot(SnapshotPath(a.out), "train", snapshot);

  SpeakerNet model(config, opts.seed);
  Trainer trainer(&model, opts);
  if (!a.resume.empty()) {
    const Checkpoint ckpt = Checkpoint::Load(a.resume);
    if (!(ckpt.config == config)) {
      throw ConfigError("checkpoint " + a.resume + " was trained with a different model config");
    }
    trainer.Resume(ckpt);
    LOG(INFO) << "resumed from " << a.resume << " at epoch " << ckpt.epoch;
  }
  LOG(INFO) << "training " << model_name << " on " << data.size() << " utterances of "
            << speakers.size() << " speakers, pooled dim " << config.PooledDim();
  const auto records = trainer.Run(data, nullptr, [&](const Checkpoint& c) {
    c.Save(a.out);
    if (c.epoch < opts.epochs) c.Save(a.out + ".epoch" + std::to_string(c.epoch));
  });
  for (const auto& r : records) {
    std::printf("epoch %llu loss %.6f mean_z_norm %.6f\n",
                static_cast<unsigned long long>(r.epoch), r.mean_loss, r.mean_z_norm);
  }
}

// ------------------------------------------------------------------ extract

struct ExtractArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  Frontend frontend;
};

void RunExtract(const ExtractArgs& a) {
  const Checkpoint ckpt = Checkpoint::Load(a.checkpoint);
  SpeakerNet model = ckpt.BuildModel();
  const Manifest manifest = Manifest::Read(a.manifest);
  const std::size_t min_frames = model.config().MinFrames();
  std::vector<Embedding> embeddings;
  std::string skipped;
  for (const auto& e : manifest.entries()) {
    FeatureMatrix f = ReadFeatures(e.path);
    f.utterance_id = e.utterance_id;
    try {
      f = a.frontend.Apply(std::move(f));
    } catch (const DegenerateInputError& err) {
      LOG(WARNING) << "skipping " << e.utterance_id << ": " << err.what();
      skipped += e.utterance_id + " vad-removed-all-frames\n";
      continue;
    }
    if (f.num_frames < min_frames) {
      LOG(WARNING) << "skipping " << e.utterance_id << ": " << f.num_frames
                   << " frames, the model needs at least " << min_frames;
      skipped += e.utterance_id + " too-short " + std::to_string(f.num_frames) + "\n";
      continue;
    }
    embeddings.push_back(model.ExtractEmbedding(f.ToTensor(), e.utterance_id));
  }
  WriteEmbeddings(embeddings, a.out);
  WriteFileAtomic(a.out + ".skipped", skipped);
  Settings s = {{"checkpoint", a.checkpoint}, {"manifest", a.manifest}, {"out", a.out}};
  a.frontend.Record(&s);
  WriteSnapshot(SnapshotPath(a.out), "extract", s);
  LOG(INFO) << "extracted " << embeddings.size() << " embeddings of dim "
            << model.config().embedding_dim << " (" << manifest.size() - embeddings.size()
            << " skipped)";
}

// ------------------------------------------------------------------ backend

struct BackendArgs {
  std::string embeddings;
  std::string manifest;
  std::string out;
  BackendOptions options;
  bool no_length_norm = false;
};

void RunBackend(BackendArgs a) {
  const auto embeddings = ReadEmbeddings(a.embeddings);
  const auto speaker_of = Manifest::Read(a.manifest).SpeakerOf();
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> labels;
  for (const auto& e : embeddings) {
    auto it = speaker_of.find(e.utterance_id);
    if (it == speaker_of.end()) {
      throw ReferenceError("embedding '" + e.utterance_id + "' is not in manifest " + a.manifest);
    }
    labels.push_back(index.emplace(it->second, index.size()).first->second);
  }
  a.options.length_normalize = !a.no_length_norm;
  std::vector<double> ll;
  const Backend b = TrainBackend(EmbeddingMatrix(embeddings), labels, a.options, &ll);
  b.Save(a.out);
  WriteSnapshot(SnapshotPath(a.out), "backend",
                {{"embeddings", a.embeddings},
                 {"manifest", a.manifest},
                 {"out", a.out},
                 {"lda_dim", std::to_string(a.options.lda_dim)},
                 {"length_normalize", a.options.length_normalize ? "1" : "0"},
                 {"plda_iterations", std::to_string(a.options.plda.iterations)}});
  LOG(INFO) << "backend " << b.lda.input_dim() << " -> " << b.lda.output_dim()
            << ", PLDA log-likelihood " << ll.front() << " -> " << ll.back();
}

// ------------------------------------------------------------------ adapt

struct AdaptArgs {
  std::string backend;
  std::string embeddings;
  std::string out;
  AdaptationConfig config;
};

void RunAdapt(const AdaptArgs& a) {
  const Backend b = Backend::Load(a.backend);
  const Backend adapted = AdaptBackend(b, EmbeddingMatrix(ReadEmbeddings(a.embeddings)), a.config);
  adapted.Save(a.out);
  WriteSnapshot(SnapshotPath(a.out), "adapt",
                {{"backend", a.backend},
                 {"embeddings", a.embeddings},
                 {"out", a.out},
                 {"within_scale", Format(a.config.within_scale)},
                 {"between_scale", Format(a.config.between_scale)}});
}

// ------------------------------------------------------------------ score

struct ScoreArgs {
  std::string backend;
  std::string embeddings;
  std::string trials;
  std::string out;
};

void RunScore(const ScoreArgs& a) {
  const Backend b = Backend::Load(a.backend);
  const auto trials = LoadTrials(a.trials);
  const auto scores = ScoreTrials(b, ReadEmbeddings(a.embeddings), trials);
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    out.push_back({trials[i].enroll_id, trials[i].test_id, scores[i]});
  }
  WriteScores(out, a.out);
  WriteSnapshot(SnapshotPath(a.out), "score",
                {{"backend", a.backend},
                 {"embeddings", a.embeddings},
                 {"trials", a.trials},
                 {"out", a.out}});
  LOG(INFO) << "scored " << out.size() << " trials";
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string scores;
  std::string trials;
  std::string out;
  std::string det_out;
  std::vector<double> p_targets = {0.01, 0.005};
};

void RunEval(const EvalArgs& a) {
  const ScoreSet set = MatchKey(ReadScores(a.scores), LoadTrials(a.trials));
  const MetricReport report = Evaluate(set, a.p_targets);
  const std::string text = report.ToText();
  WriteFileAtomic(a.out, text);
  if (!a.det_out.empty()) WriteFileAtomic(a.det_out, DetPointsToText(DetPoints(set)));
  std::string ps;
  for (double p : a.p_targets) ps += (ps.empty() ? "" : ",") + Format(p);
  WriteSnapshot(SnapshotPath(a.out), "eval",
                {{"scores", a.scores},
                 {"trials", a.trials},
                 {"out", a.out},
                 {"det_out", a.det_out},
                 {"p_target", ps}});
  std::cout << text;
}

int Main(int argc, char** argv) {
  CLI::App app{"mlpool: multi-level pooling speaker embeddings, backend and scoring"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic speaker corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--create", gen.create, "Create the output directory if missing");
  gen_cmd->add_option("--speakers", gen.spec.num_speakers, "Number of speakers");
  gen_cmd->add_option("--utts", gen.spec.utterances_per_speaker, "Utterances per speaker");
  gen_cmd->add_option("--frames", gen.spec.frames_per_utterance, "Frames per utterance");
  gen_cmd->add_option("--dim", gen.spec.feature_dim, "Feature dimension");
  gen_cmd->add_option("--separation", gen.spec.separation, "Speaker mean scale");
  gen_cmd->add_option("--rho", gen.spec.rho, "AR(1) frame correlation");
  gen_cmd->add_option("--noise", gen.spec.noise, "Frame noise scale");
  gen_cmd->add_option("--seed", gen.spec.seed, "Random seed");

  ConvertArgs conv;
  auto* conv_cmd = app.add_subcommand(
      "convert-features", "Convert a text matrix (one frame per line) to a feature file");
  conv_cmd->add_option("--in", conv.in, "Text matrix")->required();
  conv_cmd->add_option("--out", conv.out, "Feature file; its stem is the utterance id")->required();

  MakeTrialsArgs mt;
  auto* mt_cmd = app.add_subcommand("make-trials", "Sample a trial list from a manifest");
  mt_cmd->add_option("--manifest", mt.manifest, "Manifest")->required();
  mt_cmd->add_option("--out", mt.out, "Trial list")->required();
  mt_cmd->add_option("--targets", mt.targets, "Target trials");
  mt_cmd->add_option("--nontargets", mt.nontargets, "Nontarget trials");
  mt_cmd->add_option("--seed", mt.seed, "Random seed");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a speaker embedding network");
  tr.app = tr_cmd;
  tr_cmd->add_option("--manifest", tr.manifest, "Training manifest")->required();
  tr_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  tr_cmd->add_option("--config", tr.config, "Config file (default: $MLPOOL_CONFIG)");
  tr_cmd->add_option("--resume", tr.resume, "Checkpoint to resume from");
  tr_cmd->add_option("--model", tr.model, "Topology")
      ->check(CLI::IsMember(ModelConfig::TopologyNames()));
  tr_cmd->add_option("--lambda", tr.options.lambda, "Embedding norm penalty weight");
  tr_cmd->add_option("--epochs", tr.options.epochs, "Epochs");
  tr_cmd->add_option("--chunk-len", tr.options.chunk_len, "Training chunk length in frames");
  tr_cmd->add_option("--batch-size", tr.options.batch_size, "Chunks per minibatch");
  tr_cmd->add_option("--lr", tr.options.learning_rate, "Learning rate");
  tr_cmd->add_option("--momentum", tr.options.momentum, "Momentum");
  tr_cmd->add_option("--seed", tr.options.seed, "Random seed");
  tr_cmd->add_option("--checkpoint-every", tr.options.checkpoint_every, "Epochs between checkpoints");
  tr_cmd->add_option("--set", tr.overrides, "key=value override (model or trainer key)");
  tr.frontend.AddOptions(tr_cmd);

  ExtractArgs ex;
  auto* ex_cmd = app.add_subcommand("extract", "Extract embeddings");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint")->required();
  ex_cmd->add_option("--manifest", ex.manifest, "Manifest")->required();
  ex_cmd->add_option("--out", ex.out, "Embedding file (.bin for binary)")->required();
  ex.frontend.AddOptions(ex_cmd);

  BackendArgs be;
  auto* be_cmd = app.add_subcommand("backend", "Train the LDA + PLDA backend");
  be_cmd->add_option("--embeddings", be.embeddings, "Training embeddings")->required();
  be_cmd->add_option("--manifest", be.manifest, "Manifest giving speaker labels")->required();
  be_cmd->add_option("--out", be.out, "Backend model path")->required();
  be_cmd->add_option("--lda-dim", be.options.lda_dim, "LDA output dimension");
  be_cmd->add_flag("--no-length-norm", be.no_length_norm, "Skip length normalization");
  be_cmd->add_option("--plda-iters", be.options.plda.iterations, "PLDA EM iterations");

  AdaptArgs ad;
  auto* ad_cmd = app.add_subcommand("adapt", "Adapt the PLDA on unlabelled embeddings");
  ad_cmd->add_option("--backend", ad.backend, "Backend model")->required();
  ad_cmd->add_option("--embeddings", ad.embeddings, "Unlabelled embeddings")->required();
  ad_cmd->add_option("--out", ad.out, "Adapted backend path")->required();
  ad_cmd->add_option("--within-scale", ad.config.within_scale, "Share of excess added to within");
  ad_cmd->add_option("--between-scale", ad.config.between_scale, "Share of excess added to between");

  ScoreArgs sc;
  auto* sc_cmd = app.add_subcommand("score", "Score trials with a backend");
  sc_cmd->add_option("--backend", sc.backend, "Backend model")->required();
  sc_cmd->add_option("--embeddings", sc.embeddings, "Embeddings")->required();
  sc_cmd->add_option("--trials", sc.trials, "Trial list")->required();
  sc_cmd->add_option("--out", sc.out, "Score file")->required();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Compute EER and minDCF");
  ev_cmd->add_option("--scores", ev.scores, "Score file")->required();
  ev_cmd->add_option("--trials", ev.trials, "Trial key")->required();
  ev_cmd->add_option("--out", ev.out, "Report path")->required();
  ev_cmd->add_option("--det-out", ev.det_out, "Optional DET point dump");
  ev_cmd->add_option("--p-target", ev.p_targets, "Target priors for minDCF");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*gen_cmd) RunGenData(gen);
    if (*conv_cmd) RunConvert(conv);
    if (*mt_cmd) RunMakeTrials(mt);
    if (*tr_cmd) RunTrain(tr);
    if (*ex_cmd) RunExtract(ex);
    if (*be_cmd) RunBackend(be);
    if (*ad_cmd) RunAdapt(ad);
    if (*sc_cmd) RunScore(sc);
    if (*ev_cmd) RunEval(ev);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace mlpool

int main(int argc, char** argv) {
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;
  return mlpool::Main(argc, argv);
}
