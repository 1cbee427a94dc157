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

#ifndef MLPOOL_METRICS_H_
#define MLPOOL_METRICS_H_

#include <string>
#include <string_view>
#include <vector>

#include "mlpool/data.h"

namespace mlpool {

// Detection scores split by ground truth. Higher scores mean "more likely the
// same speaker"; a trial is accepted at threshold t when score >= t.
struct ScoreSet {
  std::vector<double> targets;
  std::vector<double> nontargets;

  // Throws ContractError if either class is empty, NumericError on a
  // non-finite score.
  void Validate() const;
};

struct DetPoint {
  double threshold;
  double p_miss;  // fraction of targets with score < threshold
  double p_fa;    // fraction of nontargets with score >= threshold
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void Validate() const;  // ConfigError outside p in (0, 1), costs > 0
};

// One point per distinct score in increasing order, followed by +infinity.
// p_miss is non-decreasing and p_fa non-increasing along the result.
std::vector<DetPoint> DetPoints(const ScoreSet& scores);

// Rate at which p_miss = p_fa, linearly interpolated between the two DET
// points that bracket the crossing.
double Eer(const ScoreSet& scores);

// min over thresholds of c_miss p_target p_miss + c_fa (1 - p_target) p_fa,
// divided by min(c_miss p_target, c_fa (1 - p_target)).
double MinDcf(const ScoreSet& scores, const DcfParams& params);

// Score file: "enroll-id test-id score" per line.
struct ScoredTrial {
  std::string enroll_id;
  std::string test_id;
  double score;
};

std::string ScoresToText(const std::vector<ScoredTrial>& scores);
std::vector<ScoredTrial> ParseScores(std::string_view text);
void WriteScores(const std::vector<ScoredTrial>& scores, const std::string& path);
std::vector<ScoredTrial> ReadScores(const std::string& path);

// Pairs each key trial with its score. Throws ReferenceError naming the first
// key trial without a score and ContractError on duplicate scored pairs.
ScoreSet MatchKey(const std::vector<ScoredTrial>& scores, const std::vector<Trial>& key);

struct MetricReport {
  std::size_t num_targets = 0;
  std::size_t num_nontargets = 0;
  double eer = 0.0;
  std::vector<std::pair<DcfParams, double>> min_dcf;

  // Human-readable summary followed by "key=value" lines, e.g.
  // "eer=0.0523" and "min_dcf@0.01=0.412".
  std::string ToText() const;
};

MetricReport Evaluate(const ScoreSet& scores, const std::vector<double>& p_targets);

// "threshold p_miss p_fa" per line.
std::string DetPointsToText(const std::vector<DetPoint>& points);

}  // namespace mlpool

#endif  // MLPOOL_METRICS_H_
