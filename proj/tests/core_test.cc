// Copyright 2026 The jcl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "jcl/core.hpp"
#include "jcl/rng.hpp"
#include "jcl/strategy.hpp"

namespace jcl {
namespace {

TEST(OutcomeSetTest, RejectsEmptyAndDuplicates) {
  EXPECT_THROW(OutcomeSet({}), InvalidArgument);
  EXPECT_THROW(OutcomeSet({"a", "b", "a"}), InvalidArgument);
  OutcomeSet s({"x", "y"});
  EXPECT_EQ(s.index_of("y"), 1u);
  EXPECT_EQ(s.find("z"), s.size());
  EXPECT_THROW(s.index_of("z"), InvalidArgument);
}

TEST(ProbabilityVectorTest, ValidatesMass) {
  auto j = MakeOutcomeSet({"a", "b", "c"});
  EXPECT_THROW(ProbabilityVector(j, {0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(ProbabilityVector(j, {0.5, 0.6, -0.1}), InvalidArgument);
  EXPECT_THROW(ProbabilityVector(j, {0.5, 0.4, 0.2}), InvalidArgument);
  EXPECT_NO_THROW(ProbabilityVector(j, {0.5, 0.5 - 1e-13, 0.0}));
  ProbabilityVector p(j, {0.25, 0.0, 0.75});
  EXPECT_EQ(p.support(), (std::vector<std::size_t>{0, 2}));
  EXPECT_FALSE(p.is_dirac());
  EXPECT_TRUE(ProbabilityVector::Dirac(j, 1).is_dirac());
  EXPECT_DOUBLE_EQ(ProbabilityVector::Uniform(j).mass("c"), 1.0 / 3.0);
}

TEST(BinaryCoinPairTest, RejectsDegenerateCoins) {
  EXPECT_THROW(BinaryCoinPair(0.0, 0.5), InvalidArgument);
  EXPECT_THROW(BinaryCoinPair(0.5, 1.0), InvalidArgument);
  EXPECT_THROW(BinaryCoinPair(std::nan(""), 0.5), InvalidArgument);
}

TEST(BinaryCoinPairTest, DerivedConstants) {
  BinaryCoinPair coins(0.3, 0.7);
  EXPECT_DOUBLE_EQ(coins.c0(), 0.3);
  EXPECT_NEAR(coins.c1(), 0.09, 1e-15);
  EXPECT_DOUBLE_EQ(coins.prob(1, Letter::kBeta), 1.0 - 0.7);
  EXPECT_NEAR(coins.pair_prob({Letter::kAlpha, Letter::kAlpha}), 0.21, 1e-15);
}

TEST(BinarizeTest, SumsMassOnAlphaSide) {
  auto xyz = MakeOutcomeSet({"x", "y", "z"});
  EXPECT_DOUBLE_EQ(
      Binarize(BinaryPartition(xyz, {"x", "y"}), ProbabilityVector(xyz, {0.2, 0.3, 0.5})),
      0.5);
  auto ab = MakeOutcomeSet({"alpha", "beta"});
  EXPECT_DOUBLE_EQ(
      Binarize(BinaryPartition(ab, {"alpha"}), ProbabilityVector(ab, {0.4, 0.6})), 0.4);
}

TEST(BinarizeTest, RejectsZeroMassSide) {
  auto xy = MakeOutcomeSet({"x", "y"});
  EXPECT_THROW(Binarize(BinaryPartition(xy, {"x"}), ProbabilityVector(xy, {1.0, 0.0})),
               InvalidArgument);
}

TEST(BinarizeTest, PartitionMustBeProper) {
  auto xy = MakeOutcomeSet({"x", "y"});
  EXPECT_THROW(BinaryPartition(xy, {}), InvalidArgument);
  EXPECT_THROW(BinaryPartition(xy, {"x", "y"}), InvalidArgument);
  EXPECT_THROW(BinaryPartition(xy, {"w"}), InvalidArgument);
}

TEST(BinarizeTest, PreservesTotalMassOnRandomInputs) {
  Stream rng(17, "binarize-property");
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 6;
    std::vector<std::string> labels;
    std::vector<double> w(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back("l" + std::to_string(i));
      w[i] = 0.01 + rng.uniform();
      total += w[i];
    }
    for (double& v : w) v /= total;
    auto set = MakeOutcomeSet(labels);
    ProbabilityVector p(set, w);
    const std::size_t cut = 1 + rng.next_u64() % (n - 1);
    std::vector<std::string> alpha(labels.begin(), labels.begin() + cut);
    std::vector<std::string> beta(labels.begin() + cut, labels.end());
    const double pa = Binarize(BinaryPartition(set, alpha), p);
    const double pb = Binarize(BinaryPartition(set, beta), p);
    EXPECT_NEAR(pa + pb, 1.0, 1e-12);
    EXPECT_GT(pa, 0.0);
    EXPECT_LT(pa, 1.0);
  }
}

TEST(StreamTest, NamedSubstreamsAreIndependentAndReproducible) {
  Stream a(42, "device1", 3);
  Stream b(42, "device1", 3);
  Stream c(42, "device2", 3);
  Stream d(42, "device1", 4);
  bool differs_c = false;
  bool differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(SampleStageTest, ReplayIsBitExact) {
  BinaryCoinPair coins(0.3, 0.7);
  StageView view;
  view.coins = &coins;
  auto s1 = Honest(coins, 0);
  auto s2 = Honest(coins, 1);
  RunStreams first(99, 5);
  RunStreams second(99, 5);
  for (int t = 0; t < 1000; ++t) {
    EXPECT_EQ(SampleStage(s1, s2, view, first), SampleStage(s1, s2, view, second));
  }
}

TEST(SampleStageTest, HonestFairCoinFrequency) {
  BinaryCoinPair coins(0.5, 0.5);
  StageView view;
  view.coins = &coins;
  auto honest = Honest(0.5);
  RunStreams streams(2024, 0);
  constexpr int kStages = 1000000;
  int alpha = 0;
  for (int t = 0; t < kStages; ++t) {
    alpha += SampleStage(honest, honest, view, streams).first == Letter::kAlpha;
  }
  EXPECT_NEAR(static_cast<double>(alpha) / kStages, 0.5, 0.005);
}

TEST(SampleStageTest, ConstantDeviceAlwaysEmitsItsLetter) {
  BinaryCoinPair coins(0.5, 0.5);
  StageView view;
  view.coins = &coins;
  DeviceStrategy always_alpha{"constant", [](const StageView&) { return 1.0; }};
  RunStreams streams(1, 0);
  for (int t = 0; t < 1000; ++t) {
    EXPECT_EQ(SampleStage(always_alpha, Honest(0.5), view, streams).first, Letter::kAlpha);
  }
}

TEST(SampleLetterTest, RejectsInvalidProbability) {
  Stream s(1, "x");
  EXPECT_THROW(SampleLetter(1.5, s), InternalError);
  EXPECT_THROW(SampleLetter(-0.1, s), InternalError);
}

TEST(TranscriptTest, AppendsLettersAndOptionalSnapshots) {
  Transcript<int> kept(true);
  Transcript<int> dropped(false);
  for (int t = 0; t < 3; ++t) {
    kept.append({Letter::kAlpha, Letter::kBeta}, t);
    dropped.append({Letter::kBeta, Letter::kBeta}, t);
  }
  EXPECT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept.snapshots()[2], 2);
  EXPECT_EQ(dropped.size(), 3u);
  EXPECT_TRUE(dropped.snapshots().empty());
}

}  // namespace
}  // namespace jcl
