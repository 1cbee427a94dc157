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

#include "mlpool/backend.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "glog/logging.h"

#include "mlpool/archive.h"
#include "mlpool/errors.h"

namespace mlpool {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Groups = std::map<std::size_t, std::vector<Eigen::Index>>;

Groups GroupRows(const MatrixXd& x, std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw DimensionError(std::to_string(labels.size()) + " labels for " +
                         std::to_string(x.rows()) + " samples");
  }
  if (!x.allFinite()) throw NumericError("backend input contains non-finite values");
  Groups g;
  for (std::size_t i = 0; i < labels.size(); ++i) g[labels[i]].push_back(static_cast<Eigen::Index>(i));
  return g;
}

VectorXd RowMean(const MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  VectorXd m = VectorXd::Zero(x.cols());
  for (auto r : rows) m += x.row(r).transpose();
  return m / static_cast<double>(rows.size());
}

MatrixXd Symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Raises eigenvalues below 1e-8 tr / p to that floor. Returns true when a
// repair happened.
bool FloorCovariance(MatrixXd* m, const char* name) {
  *m = Symmetrize(*m);
  const double floor = 1e-8 * std::max(m->trace(), 0.0) / static_cast<double>(m->rows());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(*m);
  if (es.info() != Eigen::Success) throw NumericError(std::string(name) + ": eigensolver failed");
  VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() >= floor && floor > 0.0) return false;
  if (!(floor > 0.0)) throw NumericError(std::string(name) + " has non-positive trace");
  LOG(WARNING) << name << ": eigenvalue " << ev.minCoeff() << " below floor " << floor
               << ", repaired";
  ev = ev.cwiseMax(floor);
  *m = Symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  return true;
}

double LogDet(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

MatrixXd SpdInverse(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
  return Symmetrize(llt.solve(MatrixXd::Identity(m.rows(), m.cols())));
}

void RequireSpeakers(const Groups& groups, const char* what) {
  std::size_t usable = 0;
  for (const auto& [label, rows] : groups) usable += rows.size() >= 2;
  if (groups.size() < 2 || usable < 2) {
    throw DegenerateInputError(std::string(what) +
                               " needs at least two speakers with two or more samples each");
  }
}

ArchiveEntry MatrixEntry(const std::string& name, const MatrixXd& m) {
  ArchiveEntry e;
  e.name = name;
  e.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) e.values.push_back(m(r, c));
  }
  return e;
}

ArchiveEntry VectorEntry(const std::string& name, const VectorXd& v) {
  ArchiveEntry e;
  e.name = name;
  e.shape = {static_cast<std::uint64_t>(v.size())};
  e.values.assign(v.data(), v.data() + v.size());
  return e;
}

const ArchiveEntry& RequireEntry(const TensorArchive& a, const std::string& name,
                                 std::size_t rank) {
  const ArchiveEntry* e = a.FindEntry(name);
  if (e == nullptr || e->shape.size() != rank) {
    throw FormatError(FormatError::Kind::kTruncated, "backend file lacks tensor '" + name + "'");
  }
  return *e;
}

MatrixXd EntryMatrix(const TensorArchive& a, const std::string& name) {
  const ArchiveEntry& e = RequireEntry(a, name, 2);
  MatrixXd m(e.shape[0], e.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = e.values[k++];
  }
  return m;
}

VectorXd EntryVector(const TensorArchive& a, const std::string& name) {
  const ArchiveEntry& e = RequireEntry(a, name, 1);
  return Eigen::Map<const VectorXd>(e.values.data(), static_cast<Eigen::Index>(e.values.size()));
}

}  // namespace

VectorXd LdaModel::Project(const VectorXd& x) const {
  if (x.size() != mean.size()) {
    throw ContractError("LDA expects dim " + std::to_string(mean.size()) + ", got " +
                        std::to_string(x.size()));
  }
  return projection * (x - mean);
}

MatrixXd LdaModel::ProjectRows(const MatrixXd& x) const {
  if (x.cols() != mean.size()) {
    throw ContractError("LDA expects dim " + std::to_string(mean.size()) + ", got " +
                        std::to_string(x.cols()));
  }
  return (x.rowwise() - mean.transpose()) * projection.transpose();
}

LdaModel TrainLda(const MatrixXd& x, std::span<const std::size_t> labels, std::size_t p) {
  const Groups groups = GroupRows(x, labels);
  const auto n = static_cast<double>(x.rows());
  const Eigen::Index d = x.cols();
  if (groups.size() < 2) throw DegenerateInputError("LDA needs at least two speakers");
  const std::size_t bound = std::min<std::size_t>(d, groups.size() - 1);
  if (p == 0 || p > bound) {
    throw ConfigError("LDA dimension " + std::to_string(p) + " not in [1, min(d, speakers - 1) = " +
                      std::to_string(bound) + "]");
  }
  LdaModel lda;
  lda.mean = x.colwise().mean().transpose();
  MatrixXd sw = MatrixXd::Zero(d, d), sb = MatrixXd::Zero(d, d);
  for (const auto& [label, rows] : groups) {
    const VectorXd mc = RowMean(x, rows);
    for (auto r : rows) {
      const VectorXd diff = x.row(r).transpose() - mc;
      sw.noalias() += diff * diff.transpose();
    }
    const VectorXd dm = mc - lda.mean;
    sb.noalias() += static_cast<double>(rows.size()) * dm * dm.transpose();
  }
  sw = Symmetrize(sw / n);
  sb = Symmetrize(sb / n);
  const double trace = sw.trace();
  if (!(trace > 0.0)) throw NumericError("LDA within-class scatter is zero");
  sw.diagonal().array() += 1e-6 * trace / static_cast<double>(d);

  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(sb, sw);
  if (es.info() != Eigen::Success) {
    throw NumericError("LDA generalized eigenproblem failed: within-class scatter is singular");
  }
  lda.projection.resize(static_cast<Eigen::Index>(p), d);
  lda.eigenvalues.resize(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) {
    const Eigen::Index col = d - 1 - static_cast<Eigen::Index>(k);
    VectorXd v = es.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    lda.projection.row(static_cast<Eigen::Index>(k)) = v.transpose();
    lda.eigenvalues(static_cast<Eigen::Index>(k)) = es.eigenvalues()(col);
  }
  return lda;
}

VectorXd LengthNormalize(const VectorXd& v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) throw DegenerateInputError("cannot length-normalize a zero vector");
  return v * (std::sqrt(static_cast<double>(v.size())) / norm);
}

void PldaModel::Validate() const {
  const Eigen::Index p = mean.size();
  if (p == 0 || between.rows() != p || between.cols() != p || within.rows() != p ||
      within.cols() != p) {
    throw DimensionError("PLDA parameter shapes disagree");
  }
  if (!mean.allFinite() || !between.allFinite() || !within.allFinite()) {
    throw NumericError("PLDA parameters are not finite");
  }
  const double tol = 1e-10 * std::max(1.0, within.cwiseAbs().maxCoeff() + between.cwiseAbs().maxCoeff());
  if ((between - between.transpose()).cwiseAbs().maxCoeff() > tol ||
      (within - within.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw NumericError("PLDA covariances are not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> w(within), b(between);
  if (!(w.eigenvalues().minCoeff() > 0.0)) throw NumericError("PLDA within covariance is not PD");
  if (b.eigenvalues().minCoeff() < -tol) throw NumericError("PLDA between covariance is not PSD");
}

double PldaLogLikelihood(const PldaModel& model, const MatrixXd& x,
                         std::span<const std::size_t> labels) {
  const Groups groups = GroupRows(x, labels);
  const Eigen::Index p = model.mean.size();
  if (x.cols() != p) throw ContractError("PLDA dimension mismatch");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const MatrixXd w_inv = SpdInverse(model.within, "within covariance");
  const double w_logdet = LogDet(model.within, "within covariance");
  std::map<std::size_t, std::pair<MatrixXd, double>> by_count;  // n -> ((W + nB)^-1, logdet)
  double total = 0.0;
  for (const auto& [label, rows] : groups) {
    const std::size_t n = rows.size();
    auto it = by_count.find(n);
    if (it == by_count.end()) {
      const MatrixXd m = model.within + static_cast<double>(n) * model.between;
      it = by_count.emplace(n, std::make_pair(SpdInverse(m, "W + nB"), LogDet(m, "W + nB"))).first;
    }
    const VectorXd mc = RowMean(x, rows);
    double scatter = 0.0;
    for (auto r : rows) {
      const VectorXd diff = x.row(r).transpose() - mc;
      scatter += diff.dot(w_inv * diff);
    }
    const VectorXd dm = mc - model.mean;
    const double nd = static_cast<double>(n);
    total += -0.5 * (nd * p * log_2pi + (nd - 1.0) * w_logdet + it->second.second + scatter +
                     nd * dm.dot(it->second.first * dm));
  }
  return total;
}

namespace {

PldaModel EmStep(const PldaModel& model, const MatrixXd& x, const Groups& groups, bool* repaired) {
  const Eigen::Index p = model.mean.size();
  MatrixXd sb = MatrixXd::Zero(p, p), sw = MatrixXd::Zero(p, p);
  std::map<std::size_t, std::pair<MatrixXd, MatrixXd>> by_count;  // n -> (gain, posterior cov)
  for (const auto& [label, rows] : groups) {
    const std::size_t n = rows.size();
    const double nd = static_cast<double>(n);
    auto it = by_count.find(n);
    if (it == by_count.end()) {
      // y | xbar ~ N(K (xbar - mu), B - K B) with K = B (B + W / n)^-1.
      const MatrixXd gain =
          SpdInverse(model.between + model.within / nd, "B + W / n") * model.between;
      const MatrixXd k = gain.transpose();
      it = by_count.emplace(n, std::make_pair(k, Symmetrize(model.between - k * model.between)))
               .first;
    }
    const MatrixXd& k = it->second.first;
    const MatrixXd& cov = it->second.second;
    const VectorXd mc = RowMean(x, rows);
    const VectorXd y = k * (mc - model.mean);
    sb.noalias() += cov + y * y.transpose();
    for (auto r : rows) {
      const VectorXd diff = x.row(r).transpose() - mc;
      sw.noalias() += diff * diff.transpose();
    }
    const VectorXd resid = mc - model.mean - y;
    sw.noalias() += nd * (resid * resid.transpose() + cov);
  }
  PldaModel out;
  out.mean = model.mean;
  out.between = sb / static_cast<double>(groups.size());
  out.within = sw / static_cast<double>(x.rows());
  *repaired = FloorCovariance(&out.between, "PLDA between covariance");
  *repaired |= FloorCovariance(&out.within, "PLDA within covariance");
  return out;
}

}  // namespace

PldaModel PldaEmIteration(const PldaModel& model, const MatrixXd& x,
                          std::span<const std::size_t> labels) {
  model.Validate();
  if (x.cols() != model.mean.size()) throw ContractError("PLDA dimension mismatch");
  bool repaired = false;
  return EmStep(model, x, GroupRows(x, labels), &repaired);
}

PldaModel TrainPlda(const MatrixXd& x, std::span<const std::size_t> labels,
                    const PldaOptions& options, std::vector<double>* log_likelihoods) {
  const Groups groups = GroupRows(x, labels);
  RequireSpeakers(groups, "PLDA training");
  const Eigen::Index p = x.cols();
  PldaModel model;
  model.mean = x.colwise().mean().transpose();
  model.within = MatrixXd::Zero(p, p);
  model.between = MatrixXd::Zero(p, p);
  for (const auto& [label, rows] : groups) {
    const VectorXd mc = RowMean(x, rows);
    for (auto r : rows) {
      const VectorXd diff = x.row(r).transpose() - mc;
      model.within.noalias() += diff * diff.transpose();
    }
    const VectorXd dm = mc - model.mean;
    model.between.noalias() += dm * dm.transpose();
  }
  model.within /= static_cast<double>(x.rows());
  model.between /= static_cast<double>(groups.size());
  FloorCovariance(&model.within, "PLDA within covariance");
  FloorCovariance(&model.between, "PLDA between covariance");

  double ll = PldaLogLikelihood(model, x, labels);
  if (log_likelihoods) log_likelihoods->push_back(ll);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    bool repaired = false;
    PldaModel next = EmStep(model, x, groups, &repaired);
    const double next_ll = PldaLogLikelihood(next, x, labels);
    VLOG(1) << "PLDA EM iteration " << it + 1 << " log-likelihood " << next_ll;
    if (next_ll < ll - 1e-9 * std::max(1.0, std::abs(ll))) {
      if (!repaired) {
        throw NumericError("PLDA EM log-likelihood decreased at iteration " +
                           std::to_string(it + 1) + ": " + std::to_string(ll) + " -> " +
                           std::to_string(next_ll));
      }
      LOG(WARNING) << "PLDA log-likelihood decreased after an eigenvalue floor repair";
    }
    model = std::move(next);
    ll = next_ll;
    if (log_likelihoods) log_likelihoods->push_back(ll);
  }
  model.Validate();
  return model;
}

PldaScorer::PldaScorer(const PldaModel& model) {
  model.Validate();
  mean_ = model.mean;
  const MatrixXd total = model.between + model.within;
  const MatrixXd t_inv = SpdInverse(total, "between + within");
  const MatrixXd s = Symmetrize(total - model.between * t_inv * model.between);
  const MatrixXd s_inv = SpdInverse(s, "conditional covariance");
  q_ = Symmetrize(t_inv - s_inv);
  p_ = Symmetrize(t_inv * model.between * s_inv);
  offset_ = 0.5 * (LogDet(total, "between + within") - LogDet(s, "conditional covariance"));
}

double PldaScorer::Score(const VectorXd& enroll, const VectorXd& test) const {
  if (enroll.size() != mean_.size() || test.size() != mean_.size()) {
    throw ContractError("PLDA scoring expects dim " + std::to_string(mean_.size()) + ", got " +
                        std::to_string(enroll.size()) + " and " + std::to_string(test.size()));
  }
  const VectorXd e = enroll - mean_, t = test - mean_;
  // Each pair of terms swaps under enroll <-> test; '+' is commutative in
  // floating point, so the score is exactly symmetric.
  const double qe = e.dot(q_ * e), qt = t.dot(q_ * t);
  const double c1 = e.dot(p_ * t), c2 = t.dot(p_ * e);
  return 0.5 * (qe + qt) + 0.5 * (c1 + c2) + offset_;
}

void AdaptationConfig::Validate() const {
  if (!(within_scale >= 0.0 && within_scale <= 1.0) ||
      !(between_scale >= 0.0 && between_scale <= 1.0)) {
    throw ConfigError("adaptation scales must lie in [0, 1]");
  }
}

PldaModel AdaptPlda(const PldaModel& model, const MatrixXd& unlabeled,
                    const AdaptationConfig& config) {
  config.Validate();
  model.Validate();
  const Eigen::Index p = model.mean.size();
  if (unlabeled.cols() != p) throw ContractError("adaptation data dimension mismatch");
  if (unlabeled.rows() < p + 1) {
    throw DegenerateInputError("PLDA adaptation needs at least " + std::to_string(p + 1) +
                               " unlabelled vectors, got " + std::to_string(unlabeled.rows()));
  }
  if (!unlabeled.allFinite()) throw NumericError("adaptation data contains non-finite values");
  PldaModel out = model;
  out.mean = unlabeled.colwise().mean().transpose();
  const MatrixXd centered = unlabeled.rowwise() - out.mean.transpose();
  const MatrixXd total = Symmetrize(centered.transpose() * centered / static_cast<double>(unlabeled.rows()));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Symmetrize(total - model.between - model.within));
  if (es.info() != Eigen::Success) throw NumericError("adaptation eigensolver failed");
  const MatrixXd excess = Symmetrize(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                                     es.eigenvectors().transpose());
  out.within = Symmetrize(model.within + config.within_scale * excess);
  out.between = Symmetrize(model.between + config.between_scale * excess);
  out.Validate();
  return out;
}

VectorXd Backend::Transform(std::span<const double> embedding) const {
  VectorXd v = lda.Project(Eigen::Map<const VectorXd>(embedding.data(),
                                                      static_cast<Eigen::Index>(embedding.size())));
  return length_normalize ? LengthNormalize(v) : v;
}

MatrixXd Backend::TransformRows(const MatrixXd& embeddings) const {
  MatrixXd z = lda.ProjectRows(embeddings);
  if (length_normalize) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) = LengthNormalize(z.row(r).transpose()).transpose();
  }
  return z;
}

std::string Backend::Serialize() const {
  TensorArchive a;
  a.magic = std::string(kMagic);
  a.metadata = {{"length_normalize", length_normalize ? "1" : "0"}};
  a.entries = {VectorEntry("lda.mean", lda.mean), MatrixEntry("lda.projection", lda.projection),
               VectorEntry("lda.eigenvalues", lda.eigenvalues), VectorEntry("plda.mean", plda.mean),
               MatrixEntry("plda.between", plda.between), MatrixEntry("plda.within", plda.within)};
  return SerializeArchive(a);
}

Backend Backend::Parse(std::string_view bytes) {
  const TensorArchive a = ParseArchive(bytes, kMagic);
  Backend b;
  b.length_normalize = a.Meta("length_normalize") == "1";
  b.lda.mean = EntryVector(a, "lda.mean");
  b.lda.projection = EntryMatrix(a, "lda.projection");
  b.lda.eigenvalues = EntryVector(a, "lda.eigenvalues");
  b.plda.mean = EntryVector(a, "plda.mean");
  b.plda.between = EntryMatrix(a, "plda.between");
  b.plda.within = EntryMatrix(a, "plda.within");
  if (b.lda.projection.cols() != b.lda.mean.size() ||
      b.lda.projection.rows() != b.plda.mean.size()) {
    throw DimensionError("backend file has inconsistent LDA and PLDA dimensions");
  }
  b.plda.Validate();
  return b;
}

void Backend::Save(const std::string& path) const { WriteFileAtomic(path, Serialize()); }

Backend Backend::Load(const std::string& path) {
  try {
    return Parse(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

Backend TrainBackend(const MatrixXd& embeddings, std::span<const std::size_t> labels,
                     const BackendOptions& options, std::vector<double>* log_likelihoods) {
  Backend b;
  b.lda = TrainLda(embeddings, labels, options.lda_dim);
  b.length_normalize = options.length_normalize;
  b.plda = TrainPlda(b.TransformRows(embeddings), labels, options.plda, log_likelihoods);
  return b;
}

Backend AdaptBackend(const Backend& backend, const MatrixXd& unlabeled,
                     const AdaptationConfig& config) {
  Backend out = backend;
  out.plda = AdaptPlda(backend.plda, backend.TransformRows(unlabeled), config);
  return out;
}

std::vector<double> ScoreTrials(const Backend& backend, const std::vector<Embedding>& embeddings,
                                const std::vector<Trial>& trials) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < embeddings.size(); ++i) index[embeddings[i].utterance_id] = i;
  CheckTrialIds(trials, index);
  std::map<std::size_t, VectorXd> transformed;
  auto get = [&](const std::string& id) -> const VectorXd& {
    const std::size_t i = index.at(id);
    auto it = transformed.find(i);
    if (it == transformed.end()) it = transformed.emplace(i, backend.Transform(embeddings[i].vector)).first;
    return it->second;
  };
  const PldaScorer scorer(backend.plda);
  std::vector<double> scores;
  scores.reserve(trials.size());
  for (const auto& t : trials) scores.push_back(scorer.Score(get(t.enroll_id), get(t.test_id)));
  return scores;
}

std::string EmbeddingsToText(const std::vector<Embedding>& embeddings) {
  std::string out;
  char buf[32];
  for (const auto& e : embeddings) {
    out += e.utterance_id + " " + std::to_string(e.vector.size());
    for (double v : e.vector) {
      std::snprintf(buf, sizeof(buf), " %.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::vector<Embedding> ParseEmbeddingsText(std::string_view text) {
  std::vector<Embedding> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    Embedding e;
    std::size_t dim = 0;
    if (!(ls >> e.utterance_id)) continue;  // blank line
    auto fail = [&](const std::string& why) {
      return ParseError("embedding line " + std::to_string(line_no) + ": " + why);
    };
    if (!(ls >> dim) || dim == 0) throw fail("expected 'utterance-id dim v1 ... vdim'");
    e.vector.resize(dim);
    for (auto& v : e.vector) {
      if (!(ls >> v)) throw fail("fewer than " + std::to_string(dim) + " values");
    }
    std::string extra;
    if (ls >> extra) throw fail("more than " + std::to_string(dim) + " values");
    if (!seen.insert(e.utterance_id).second) throw fail("duplicate id '" + e.utterance_id + "'");
    out.push_back(std::move(e));
  }
  return out;
}

std::string EmbeddingsToBinary(const std::vector<Embedding>& embeddings) {
  TensorArchive a;
  a.magic = std::string(kEmbeddingMagic);
  for (const auto& e : embeddings) a.entries.push_back({e.utterance_id, {e.vector.size()}, e.vector});
  return SerializeArchive(a);
}

std::vector<Embedding> ParseEmbeddingsBinary(std::string_view bytes) {
  const TensorArchive a = ParseArchive(bytes, kEmbeddingMagic);
  std::vector<Embedding> out;
  for (const auto& e : a.entries) {
    if (e.shape.size() != 1) {
      throw FormatError(FormatError::Kind::kTruncated, "embedding '" + e.name + "' is not a vector");
    }
    out.push_back({e.name, e.values});
  }
  return out;
}

void WriteEmbeddings(const std::vector<Embedding>& embeddings, const std::string& path) {
  const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0;
  WriteFileAtomic(path, binary ? EmbeddingsToBinary(embeddings) : EmbeddingsToText(embeddings));
}

std::vector<Embedding> ReadEmbeddings(const std::string& path) {
  const std::string bytes = ReadFileBytes(path);
  try {
    if (bytes.compare(0, kEmbeddingMagic.size(), kEmbeddingMagic) == 0) {
      return ParseEmbeddingsBinary(bytes);
    }
    return ParseEmbeddingsText(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path + ": " + e.what());
  }
}

MatrixXd EmbeddingMatrix(const std::vector<Embedding>& embeddings) {
  if (embeddings.empty()) throw DegenerateInputError("no embeddings");
  const std::size_t d = embeddings[0].vector.size();
  MatrixXd m(static_cast<Eigen::Index>(embeddings.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].vector.size() != d) {
      throw DimensionError("embedding '" + embeddings[i].utterance_id + "' has dim " +
                           std::to_string(embeddings[i].vector.size()) + ", expected " +
                           std::to_string(d));
    }
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const VectorXd>(embeddings[i].vector.data(), static_cast<Eigen::Index>(d));
  }
  return m;
}

}  // namespace mlpool
