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

#include "mlpool/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "mlpool/archive.h"
#include "mlpool/errors.h"

namespace mlpool {

void ScoreSet::Validate() const {
  if (targets.empty() || nontargets.empty()) {
    throw ContractError("detection metrics need at least one target and one nontarget score (got " +
                        std::to_string(targets.size()) + " and " +
                        std::to_string(nontargets.size()) + ")");
  }
  for (const auto* v : {&targets, &nontargets}) {
    for (double s : *v) {
      if (!std::isfinite(s)) throw NumericError("non-finite detection score");
    }
  }
}

void DcfParams::Validate() const {
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("p_target must lie in (0, 1)");
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) throw ConfigError("DCF costs must be positive");
}

std::vector<DetPoint> DetPoints(const ScoreSet& scores) {
  scores.Validate();
  std::vector<double> tar = scores.targets, non = scores.nontargets;
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  const double nt = static_cast<double>(tar.size()), nn = static_cast<double>(non.size());
  std::vector<DetPoint> points;
  std::size_t i = 0, j = 0;  // targets / nontargets strictly below the threshold
  while (i < tar.size() || j < non.size()) {
    const double th = j == non.size() || (i < tar.size() && tar[i] < non[j]) ? tar[i] : non[j];
    points.push_back({th, static_cast<double>(i) / nt, static_cast<double>(non.size() - j) / nn});
    while (i < tar.size() && tar[i] == th) ++i;
    while (j < non.size() && non[j] == th) ++j;
  }
  points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  return points;
}

double Eer(const ScoreSet& scores) {
  const std::vector<DetPoint> pts = DetPoints(scores);
  // The first point has p_miss = 0, p_fa = 1 and the last p_miss = 1,
  // p_fa = 0, so the difference changes sign somewhere along the sweep.
  double prev = pts[0].p_miss - pts[0].p_fa;
  if (prev == 0.0) return pts[0].p_miss;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double d = pts[k].p_miss - pts[k].p_fa;
    if (d == 0.0) return pts[k].p_miss;
    if (prev < 0.0 && d > 0.0) {
      const double a = -prev / (d - prev);
      return pts[k - 1].p_miss + a * (pts[k].p_miss - pts[k - 1].p_miss);
    }
    prev = d;
  }
  throw NumericError("DET curve never crosses p_miss = p_fa");
}

double MinDcf(const ScoreSet& scores, const DcfParams& params) {
  params.Validate();
  const double w_miss = params.c_miss * params.p_target;
  const double w_fa = params.c_fa * (1.0 - params.p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : DetPoints(scores)) best = std::min(best, w_miss * p.p_miss + w_fa * p.p_fa);
  return best / std::min(w_miss, w_fa);
}

std::string ScoresToText(const std::vector<ScoredTrial>& scores) {
  std::string out;
  char buf[40];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), " %.17g\n", s.score);
    out += s.enroll_id + " " + s.test_id + buf;
  }
  return out;
}

std::vector<ScoredTrial> ParseScores(std::string_view text) {
  std::vector<ScoredTrial> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    ScoredTrial s;
    if (!(ls >> s.enroll_id)) continue;
    std::string extra;
    if (!(ls >> s.test_id >> s.score) || (ls >> extra)) {
      throw ParseError("score line " + std::to_string(line_no) +
                       ": expected 'enroll-id test-id score'");
    }
    if (!std::isfinite(s.score)) {
      throw ParseError("score line " + std::to_string(line_no) + ": non-finite score");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void WriteScores(const std::vector<ScoredTrial>& scores, const std::string& path) {
  WriteFileAtomic(path, ScoresToText(scores));
}

std::vector<ScoredTrial> ReadScores(const std::string& path) {
  try {
    return ParseScores(ReadFileBytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

ScoreSet MatchKey(const std::vector<ScoredTrial>& scores, const std::vector<Trial>& key) {
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& s : scores) {
    if (!lookup.emplace(std::make_pair(s.enroll_id, s.test_id), s.score).second) {
      throw ContractError("duplicate score for trial " + s.enroll_id + " " + s.test_id);
    }
  }
  ScoreSet out;
  for (const auto& t : key) {
    auto it = lookup.find({t.enroll_id, t.test_id});
    if (it == lookup.end()) {
      throw ReferenceError("no score for key trial " + t.enroll_id + " " + t.test_id);
    }
    (t.target ? out.targets : out.nontargets).push_back(it->second);
  }
  return out;
}

std::string MetricReport::ToText() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "trials: %zu target, %zu nontarget\nEER: %.4f%%\n", num_targets,
                num_nontargets, 100.0 * eer);
  out += buf;
  for (const auto& [p, v] : min_dcf) {
    std::snprintf(buf, sizeof(buf), "minDCF (p_target=%g): %.4f\n", p.p_target, v);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "num_targets=%zu\nnum_nontargets=%zu\neer=%.10g\n", num_targets,
                num_nontargets, eer);
  out += buf;
  for (const auto& [p, v] : min_dcf) {
    std::snprintf(buf, sizeof(buf), "min_dcf@%g=%.10g\n", p.p_target, v);
    out += buf;
  }
  return out;
}

MetricReport Evaluate(const ScoreSet& scores, const std::vector<double>& p_targets) {
  MetricReport r;
  r.num_targets = scores.targets.size();
  r.num_nontargets = scores.nontargets.size();
  r.eer = Eer(scores);
  for (double p : p_targets) {
    const DcfParams params{.p_target = p};
    r.min_dcf.emplace_back(params, MinDcf(scores, params));
  }
  return r;
}

std::string DetPointsToText(const std::vector<DetPoint>& points) {
  std::string out;
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.threshold, p.p_miss, p.p_fa);
    out += buf;
  }
  return out;
}

}  // namespace mlpool
