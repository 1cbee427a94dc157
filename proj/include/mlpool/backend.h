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

#ifndef MLPOOL_BACKEND_H_
#define MLPOOL_BACKEND_H_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mlpool/data.h"
#include "mlpool/model.h"

namespace mlpool {

// Samples are the rows of an n x d matrix throughout; labels are arbitrary
// class indices, one per row.

struct LdaModel {
  Eigen::VectorXd mean;        // [d]
  Eigen::MatrixXd projection;  // [p x d], rows by decreasing eigenvalue
  Eigen::VectorXd eigenvalues; // [p]

  std::size_t input_dim() const { return static_cast<std::size_t>(projection.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(projection.rows()); }
  Eigen::VectorXd Project(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd ProjectRows(const Eigen::MatrixXd& x) const;
};

// Solves S_b v = lambda (S_w + eps I) v with eps = 1e-6 tr(S_w) / d, keeps
// the top |p| directions scaled so that v' (S_w + eps I) v = 1. Scatter
// matrices are normalized by the sample count. Each direction's largest
// component is made positive.
LdaModel TrainLda(const Eigen::MatrixXd& x, std::span<const std::size_t> labels, std::size_t p);

// v * sqrt(dim) / ||v||.
Eigen::VectorXd LengthNormalize(const Eigen::VectorXd& v);

// Two-covariance model x = mean + y + e, y ~ N(0, between), e ~ N(0, within).
struct PldaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd between;
  Eigen::MatrixXd within;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  // Throws NumericError unless within is SPD and between is symmetric PSD.
  void Validate() const;
};

struct PldaOptions {
  std::size_t iterations = 10;
};

// Total-data log-likelihood of labelled data under |model|.
double PldaLogLikelihood(const PldaModel& model, const Eigen::MatrixXd& x,
                         std::span<const std::size_t> labels);

// One EM update of (between, within) with the mean held fixed. Eigenvalues
// that fall below 1e-8 tr / p are raised to that floor with a warning.
PldaModel PldaEmIteration(const PldaModel& model, const Eigen::MatrixXd& x,
                          std::span<const std::size_t> labels);

// Mean = global mean; covariances initialized from the class scatters and
// refined by EM. The log-likelihood after each iteration (index 0 is the
// initial model) is appended to |log_likelihoods| when non-null. Throws
// NumericError if an iteration lowers it.
PldaModel TrainPlda(const Eigen::MatrixXd& x, std::span<const std::size_t> labels,
                    const PldaOptions& options = {},
                    std::vector<double>* log_likelihoods = nullptr);

// Same-speaker versus different-speaker log-likelihood ratio for a single
// enrollment vector, via precomputed quadratic forms.
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel& model);
  // Exactly symmetric in its arguments.
  double Score(const Eigen::VectorXd& enroll, const Eigen::VectorXd& test) const;
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd p_;
  double offset_ = 0.0;
};

struct AdaptationConfig {
  double within_scale = 0.75;
  double between_scale = 0.25;

  void Validate() const;
};

// Recenters on the unlabelled mean and adds the PSD part of
// (unlabelled total covariance - between - within) to the two covariances
// in proportions between_scale / within_scale.
PldaModel AdaptPlda(const PldaModel& model, const Eigen::MatrixXd& unlabeled,
                    const AdaptationConfig& config);

struct BackendOptions {
  std::size_t lda_dim = 150;
  bool length_normalize = true;
  PldaOptions plda;
};

// LDA, optional length normalization, PLDA. Stored as an archive with magic
// "MLPB".
struct Backend {
  static constexpr std::string_view kMagic = "MLPB";

  LdaModel lda;
  bool length_normalize = true;
  PldaModel plda;

  Eigen::VectorXd Transform(std::span<const double> embedding) const;
  Eigen::MatrixXd TransformRows(const Eigen::MatrixXd& embeddings) const;

  std::string Serialize() const;
  static Backend Parse(std::string_view bytes);
  void Save(const std::string& path) const;
  static Backend Load(const std::string& path);
};

Backend TrainBackend(const Eigen::MatrixXd& embeddings, std::span<const std::size_t> labels,
                     const BackendOptions& options, std::vector<double>* log_likelihoods = nullptr);
// Adapts the PLDA stage on unlabelled raw embeddings (transformed by the
// backend's own LDA and normalization first).
Backend AdaptBackend(const Backend& backend, const Eigen::MatrixXd& unlabeled,
                     const AdaptationConfig& config);

// Scores trials with enrollment and test embeddings looked up by utterance
// id. Throws ReferenceError naming the first missing id.
std::vector<double> ScoreTrials(const Backend& backend, const std::vector<Embedding>& embeddings,
                                const std::vector<Trial>& trials);

// Embedding exchange. Text: one line per utterance "utterance-id dim v1 ...
// vdim" with values printed to round-trip exactly. Binary: a tensor archive
// with magic "MLPE", one entry of shape [dim] per utterance in file order.
inline constexpr std::string_view kEmbeddingMagic = "MLPE";

std::string EmbeddingsToText(const std::vector<Embedding>& embeddings);
std::vector<Embedding> ParseEmbeddingsText(std::string_view text);
std::string EmbeddingsToBinary(const std::vector<Embedding>& embeddings);
std::vector<Embedding> ParseEmbeddingsBinary(std::string_view bytes);
// Binary when |path| ends in ".bin", text otherwise.
void WriteEmbeddings(const std::vector<Embedding>& embeddings, const std::string& path);
// Detects the binary form by its magic.
std::vector<Embedding> ReadEmbeddings(const std::string& path);

// Stacks embeddings into rows; throws DimensionError on ragged input.
Eigen::MatrixXd EmbeddingMatrix(const std::vector<Embedding>& embeddings);

}  // namespace mlpool

#endif  // MLPOOL_BACKEND_H_
