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

#include <algorithm>
#include <cmath>
#include <random>

#include "gradcheck.h"
#include "mlpool/errors.h"
#include "mlpool/nn.h"
#include "mlpool/ops.h"
#include "oracles.h"

namespace mlpool {
namespace {

using testing::CheckGradients;
using testing::RandomTensor;

std::vector<double> Values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void SetValues(Tensor& t, const std::vector<double>& v) {
  auto dst = t.mutable_values();
  ASSERT_EQ(dst.size(), v.size());
  std::copy(v.begin(), v.end(), dst.begin());
}

std::vector<NamedTensor> Params(const auto& layer) {
  std::vector<NamedTensor> p;
  layer.Collect("layer", &p);
  return p;
}

TEST(TdnnTest, IdentityConvolution) {
  Rng rng(1);
  TdnnLayer layer(3, 3, 1, 1, rng);
  SetValues(layer.weight(), {1, 0, 0, 0, 1, 0, 0, 0, 1});
  SetValues(layer.bias(), {0, 0, 0});
  std::mt19937_64 gen(2);
  Tensor x = RandomTensor({6, 3}, gen, -2, 2, false);
  EXPECT_EQ(Values(layer.Forward(x)), Values(x));
}

TEST(TdnnTest, OutputLengthArithmetic) {
  Rng rng(1);
  TdnnLayer layer(2, 4, 3, 2, rng);
  Tensor out = layer.Forward(Tensor::Zeros({10, 2}));
  EXPECT_EQ(out.shape(), (Shape{6, 4}));
}

TEST(TdnnTest, ShortInputNamesMinimumLength) {
  Rng rng(1);
  TdnnLayer layer(2, 4, 3, 2, rng);
  try {
    layer.Forward(Tensor::Zeros({4, 2}));
    FAIL();
  } catch (const DegenerateInputError& e) {
    EXPECT_THAT(e.what(), ::testing::HasSubstr("at least 5 frames"));
  }
}

TEST(TdnnTest, MatchesNaivePerFrameLoop) {
  Rng rng(7);
  TdnnLayer layer(4, 5, 3, 2, rng);
  std::mt19937_64 gen(8);
  SetValues(layer.bias(), Values(RandomTensor({5}, gen, -1, 1, false)));
  Tensor x = RandomTensor({12, 4}, gen, -2, 2, false);
  Tensor out = layer.Forward(x);
  auto expected = oracle::NaiveTdnn(Values(x), 12, 4, Values(layer.weight()),
                                    Values(layer.bias()), 5, 3, 2);
  ASSERT_EQ(out.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out.at(i), expected[i], 1e-12);
}

TEST(TdnnTest, BatchedSequencesMatchSingles) {
  Rng rng(7);
  TdnnLayer layer(3, 4, 2, 3, rng);
  std::mt19937_64 gen(9);
  Tensor a = RandomTensor({9, 3}, gen, -2, 2, false);
  Tensor b = RandomTensor({9, 3}, gen, -2, 2, false);
  Tensor both_parts[] = {a, b};
  SequenceBatch batch{Concat(both_parts, 0), 2, 9};
  SequenceBatch out = layer.Forward(batch);
  EXPECT_EQ(out.length, 6u);
  std::vector<double> expected = Values(layer.Forward(a));
  auto vb = Values(layer.Forward(b));
  expected.insert(expected.end(), vb.begin(), vb.end());
  EXPECT_EQ(Values(out.frames), expected);
}

TEST(TdnnTest, TimeShiftEquivariance) {
  Rng rng(3);
  TdnnLayer layer(2, 3, 3, 2, rng);
  std::mt19937_64 gen(4);
  Tensor x = RandomTensor({15, 2}, gen, -2, 2, false);
  const std::size_t shift = 4;
  std::vector<std::size_t> rows;
  for (std::size_t t = shift; t < 15; ++t) rows.push_back(t);
  Tensor shifted = GatherRows(x, rows);
  Tensor full = layer.Forward(x);
  Tensor part = layer.Forward(shifted);
  ASSERT_EQ(part.dim(0) + shift, full.dim(0));
  for (std::size_t t = 0; t < part.dim(0); ++t) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(part.at(t, c), full.at(t + shift, c));
  }
}

TEST(TdnnTest, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  TdnnLayer layer(3, 4, 3, 2, rng);
  std::mt19937_64 gen(6);
  Tensor x = RandomTensor({2 * 9, 3}, gen);
  Tensor w = RandomTensor({2 * 5, 4}, gen, -2, 2, false);
  auto params = Params(layer);
  params.push_back({"x", x});
  auto r = CheckGradients(
      [&] { return SumAll(Mul(layer.Forward(SequenceBatch{x, 2, 9}).frames, w)); }, params);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(DenseTest, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Dense layer(4, 3, rng);
  std::mt19937_64 gen(6);
  Tensor x = RandomTensor({5, 4}, gen);
  Tensor w = RandomTensor({5, 3}, gen, -2, 2, false);
  auto params = Params(layer);
  params.push_back({"x", x});
  auto r = CheckGradients([&] { return SumAll(Mul(layer.Forward(x), w)); }, params);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(BatchNormTest, TrainModeNormalizesAndTracksRunningStats) {
  BatchNorm bn(2, 0.1);
  Tensor x = Tensor::FromVector({4, 2}, {1, 10, 3, 10, 5, 10, 7, 10});
  Tensor y = bn.Forward(x);
  // Column 0: mean 4, population var 5.
  EXPECT_NEAR(y.at(0, 0), (1 - 4) / std::sqrt(5 + 1e-5), 1e-12);
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_NEAR(bn.running_mean().at(0), 0.9 * 0 + 0.1 * 4, 1e-15);
  EXPECT_NEAR(bn.running_var().at(0), 0.9 * 1 + 0.1 * 5, 1e-15);
  EXPECT_NEAR(bn.running_var().at(1), 0.9, 1e-15);
}

TEST(BatchNormTest, EvalModeIsFixedAffineMap) {
  BatchNorm bn(3);
  std::mt19937_64 gen(2);
  bn.Forward(RandomTensor({6, 3}, gen, -2, 2, false));
  bn.set_training(false);
  Tensor x = RandomTensor({5, 3}, gen, -2, 2, false);
  auto mean_before = Values(bn.running_mean());
  Tensor a = bn.Forward(x);
  Tensor b = bn.Forward(x);
  EXPECT_EQ(Values(a), Values(b));
  EXPECT_EQ(Values(bn.running_mean()), mean_before);
  const double expected =
      (x.at(1, 2) - bn.running_mean().at(2)) / std::sqrt(bn.running_var().at(2) + 1e-5);
  EXPECT_NEAR(a.at(1, 2), expected, 1e-12);
}

TEST(BatchNormTest, TrainGradientMatchesFiniteDifferences) {
  BatchNorm bn(3);
  std::mt19937_64 gen(12);
  SetValues(bn.gamma(), Values(RandomTensor({3}, gen, 0.5, 1.5, false)));
  SetValues(bn.beta(), Values(RandomTensor({3}, gen, -1, 1, false)));
  Tensor x = RandomTensor({6, 3}, gen);
  Tensor w = RandomTensor({6, 3}, gen, -2, 2, false);
  auto params = Params(bn);
  params.push_back({"x", x});
  auto r = CheckGradients([&] { return SumAll(Mul(bn.Forward(x), w)); }, params);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(BlstmTest, ZeroWeightsGiveZeroOutput) {
  Rng rng(1);
  BlstmLayer layer(3, 4, rng);
  for (auto& p : Params(layer)) {
    auto v = p.tensor.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  std::mt19937_64 gen(2);
  Tensor out = layer.Forward(RandomTensor({7, 3}, gen, -2, 2, false));
  EXPECT_EQ(out.shape(), (Shape{7, 8}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(BlstmTest, InitializationConventions) {
  Rng rng(1);
  BlstmLayer layer(3, 4, rng);
  const Tensor& bias = layer.forward_direction().bias;
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(bias.at(i), (i >= 4 && i < 8) ? 1.0 : 0.0);
  // Each recurrent gate block is orthogonal.
  const Tensor& w = layer.backward_direction().w_hh;
  for (std::size_t gate = 0; gate < 4; ++gate) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < 4; ++k) dot += w.at(gate * 4 + i, k) * w.at(gate * 4 + j, k);
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(BlstmTest, SingleFrameIsOneStepEachDirection) {
  Rng rng(4);
  BlstmLayer layer(3, 2, rng);
  std::mt19937_64 gen(5);
  Tensor x = RandomTensor({1, 3}, gen, -2, 2, false);
  Tensor out = layer.Forward(x);
  auto fwd = oracle::LstmSingleStep(Values(x), Values(layer.forward_direction().w_ih),
                                    Values(layer.forward_direction().bias), 2);
  auto bwd = oracle::LstmSingleStep(Values(x), Values(layer.backward_direction().w_ih),
                                    Values(layer.backward_direction().bias), 2);
  ASSERT_EQ(out.shape(), (Shape{1, 4}));
  EXPECT_NEAR(out.at(0), fwd[0], 1e-14);
  EXPECT_NEAR(out.at(1), fwd[1], 1e-14);
  EXPECT_NEAR(out.at(2), bwd[0], 1e-14);
  EXPECT_NEAR(out.at(3), bwd[1], 1e-14);
}

TEST(BlstmTest, MatchesNaiveRecurrence) {
  Rng rng(14);
  BlstmLayer layer(3, 4, rng);
  std::mt19937_64 gen(15);
  Tensor x = RandomTensor({6, 3}, gen, -2, 2, false);
  Tensor out = layer.Forward(x);
  auto run = [&](LstmDirection& dir, bool reverse) {
    return oracle::NaiveLstm(Values(x), 6, 3, Values(dir.w_ih), Values(dir.w_hh),
                             Values(dir.bias), 4, reverse);
  };
  auto fwd = run(layer.forward_direction(), false);
  auto bwd = run(layer.backward_direction(), true);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(out.at(t, j), fwd[t * 4 + j], 1e-12);
      EXPECT_NEAR(out.at(t, 4 + j), bwd[t * 4 + j], 1e-12);
    }
  }
}

TEST(BlstmTest, BatchedSequencesMatchSingles) {
  Rng rng(2);
  BlstmLayer layer(2, 3, rng);
  std::mt19937_64 gen(3);
  Tensor a = RandomTensor({5, 2}, gen, -2, 2, false);
  Tensor b = RandomTensor({5, 2}, gen, -2, 2, false);
  Tensor both[] = {a, b};
  SequenceBatch out = layer.Forward(SequenceBatch{Concat(both, 0), 2, 5});
  std::vector<double> expected = Values(layer.Forward(a));
  auto vb = Values(layer.Forward(b));
  expected.insert(expected.end(), vb.begin(), vb.end());
  auto got = Values(out.frames);
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-14);
}

TEST(BlstmTest, InformationFlowsBothDirections) {
  Rng rng(21);
  BlstmLayer layer(3, 4, rng);
  std::mt19937_64 gen(22);
  Tensor x = RandomTensor({8, 3}, gen, -2, 2, false);
  Tensor base = layer.Forward(x);
  auto perturbed_row = [&](std::size_t row) {
    std::vector<double> v = Values(x);
    for (std::size_t c = 0; c < 3; ++c) v[row * 3 + c] += 0.5;
    return layer.Forward(Tensor::FromVector({8, 3}, v));
  };
  Tensor first = perturbed_row(0);
  Tensor last = perturbed_row(7);
  bool last_frame_changed = false, first_frame_changed = false;
  for (std::size_t c = 0; c < 8; ++c) {
    last_frame_changed |= first.at(7, c) != base.at(7, c);
    first_frame_changed |= last.at(0, c) != base.at(0, c);
  }
  EXPECT_TRUE(last_frame_changed);
  EXPECT_TRUE(first_frame_changed);
}

TEST(BlstmTest, BpttGradientMatchesFiniteDifferences) {
  Rng rng(9);
  BlstmLayer layer(2, 3, rng);
  std::mt19937_64 gen(10);
  Tensor x = RandomTensor({2 * 5, 2}, gen);
  Tensor w = RandomTensor({2 * 5, 6}, gen, -2, 2, false);
  auto params = Params(layer);
  params.push_back({"x", x});
  auto r = CheckGradients(
      [&] { return SumAll(Mul(layer.Forward(SequenceBatch{x, 2, 5}).frames, w)); }, params);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(StatsPoolTest, ConstantSequence) {
  Tensor x = Tensor::FromVector({3, 2}, {5, 5, 5, 5, 5, 5});
  Tensor p = StatsPool(x);
  EXPECT_EQ(p.shape(), (Shape{4}));
  EXPECT_EQ(p.at(0), 5.0);
  EXPECT_EQ(p.at(1), 5.0);
  EXPECT_DOUBLE_EQ(p.at(2), std::sqrt(1e-10));
  EXPECT_DOUBLE_EQ(p.at(3), std::sqrt(1e-10));
}

TEST(StatsPoolTest, TwoFrames) {
  Tensor p = StatsPool(Tensor::FromVector({2, 1}, {0, 2}));
  EXPECT_EQ(p.at(0), 1.0);
  EXPECT_NEAR(p.at(1), 1.0, 1e-10);
}

TEST(StatsPoolTest, MatchesTwoPassOracle) {
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = RandomTensor({7, 4}, gen, -3, 3, false);
    Tensor p = StatsPool(x);
    auto expected = oracle::NaiveStatsPool(Values(x), 7, 4);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(p.at(i), expected[i], 1e-12);
  }
}

TEST(StatsPoolTest, PermutationInvariantExactly) {
  // Quarter-integer values with a power-of-two frame count keep every sum
  // and division exact, so any frame order yields identical bits.
  std::mt19937_64 gen(34);
  std::uniform_int_distribution<int> q(-40, 40);
  std::vector<double> v(8 * 3);
  for (double& x : v) x = q(gen) / 4.0;
  Tensor x = Tensor::FromVector({8, 3}, v);
  Tensor base = StatsPool(x);
  std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5, 6, 7};
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), gen);
    EXPECT_EQ(Values(StatsPool(GatherRows(x, order))), Values(base));
  }
}

TEST(StatsPoolTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(35);
  Tensor x = RandomTensor({3 * 6, 4}, gen);
  Tensor w = RandomTensor({3, 8}, gen, -2, 2, false);
  auto r = CheckGradients([&] { return SumAll(Mul(StatsPool(SequenceBatch{x, 3, 6}), w)); },
                          {{"x", x}});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(PoolingHeadTest, IdentityLayersReduceToStatsPool) {
  Rng rng(1);
  PoolingHead head(3, 3, 3, rng);
  head.set_training(false);
  std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  SetValues(head.fc1().weight(), eye);
  SetValues(head.fc2().weight(), eye);
  // Running variance 1 - eps turns eval-mode BN into the identity.
  for (BatchNorm* bn : {&head.bn1(), &head.bn2()}) {
    SetValues(bn->running_var(), std::vector<double>(3, 1.0 - bn->epsilon()));
  }
  std::mt19937_64 gen(2);
  Tensor x = RandomTensor({6, 3}, gen, 0.0, 2.0, false);  // ReLU passes these
  Tensor out = head.Forward(x);
  Tensor expected = StatsPool(x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out.at(i), expected.at(i), 1e-12);
}

TEST(PoolingHeadTest, OutputWidthIsTwiceHeadWidth) {
  Rng rng(1);
  PoolingHead head(8, 16, 750, rng);
  EXPECT_EQ(head.pooled_dim(), 1500u);
  std::mt19937_64 gen(2);
  EXPECT_EQ(head.Forward(RandomTensor({4, 8}, gen, -1, 1, false)).shape(), (Shape{1500}));
}

TEST(PoolingHeadTest, MatchesStagewiseComposition) {
  Rng rng(3);
  PoolingHead head(4, 5, 3, rng);
  head.set_training(false);
  std::mt19937_64 gen(4);
  Tensor x = RandomTensor({9, 4}, gen, -2, 2, false);
  Tensor h1 = head.bn1().Forward(Relu(head.fc1().Forward(x)));
  Tensor h2 = head.bn2().Forward(Relu(head.fc2().Forward(h1)));
  EXPECT_EQ(Values(head.Forward(x)), Values(StatsPool(h2)));
}

TEST(PoolingHeadTest, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  PoolingHead head(3, 4, 2, rng);
  std::mt19937_64 gen(6);
  Tensor x = RandomTensor({2 * 6, 3}, gen);
  Tensor w = RandomTensor({2, 4}, gen, -2, 2, false);
  auto params = Params(head);
  params.push_back({"x", x});
  auto r = CheckGradients([&] { return SumAll(Mul(head.Forward(SequenceBatch{x, 2, 6}), w)); },
                          params);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

}  // namespace
}  // namespace mlpool
