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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "jcl/adversary.hpp"
#include "jcl/harness.hpp"
#include "jcl/weak.hpp"

namespace jcl {
namespace {

constexpr Letter kA = Letter::kAlpha;
constexpr Letter kB = Letter::kBeta;

// Independent check of the successor conditions by evaluating the four
// weighted sums and the support sizes directly.
struct ConditionCheck {
  double worst_martingale_error = 0.0;
  bool in_simplex = true;
  bool has_smaller_support = false;
  int successors_with_zero = 0;
};

ConditionCheck CheckConditions(const SuccessorMap& map, std::span<const double> lambda,
                               const BinaryCoinPair& coins) {
  ConditionCheck c;
  const double p1a = coins.p1_alpha();
  const double p2a = coins.p2_alpha();
  for (std::size_t j = 0; j < lambda.size(); ++j) {
    for (Letter other : {kA, kB}) {
      const double dev1 = p1a * map(kA, other)[j] + (1 - p1a) * map(kB, other)[j];
      const double dev2 = p2a * map(other, kA)[j] + (1 - p2a) * map(other, kB)[j];
      c.worst_martingale_error = std::max(
          {c.worst_martingale_error, std::fabs(dev1 - lambda[j]), std::fabs(dev2 - lambda[j])});
    }
  }
  std::size_t support = 0;
  for (double v : lambda) support += v > 0.0;
  for (Letter a1 : {kA, kB}) {
    for (Letter a2 : {kA, kB}) {
      const auto& d = map(a1, a2);
      double total = 0.0;
      std::size_t s = 0;
      bool zero_in_support = false;
      for (std::size_t j = 0; j < d.size(); ++j) {
        c.in_simplex &= d[j] >= 0.0 && d[j] <= 1.0;
        total += d[j];
        s += d[j] > 0.0;
        c.in_simplex &= !(lambda[j] == 0.0 && d[j] != 0.0);
        zero_in_support |= lambda[j] > 0.0 && d[j] == 0.0;
      }
      c.in_simplex &= std::fabs(total - 1.0) <= 1e-12;
      c.has_smaller_support |= s < support;
      c.successors_with_zero += zero_in_support;
    }
  }
  return c;
}

TEST(BuildSuccessorTest, DiracBeliefIsAbsorbing) {
  const BinaryCoinPair coins(0.3, 0.7);
  const std::vector<double> lambda{0.0, 1.0, 0.0};
  const auto map = BuildSuccessor(lambda, coins);
  EXPECT_FALSE(map.shrink_pair().has_value());
  for (int k = 0; k < 4; ++k) EXPECT_EQ(map(PairFromIndex(k)), lambda);
}

TEST(BuildSuccessorTest, FairCoinsGiveXorLottery) {
  const auto map = BuildSuccessor(std::vector<double>{0.5, 0.5}, BinaryCoinPair(0.5, 0.5));
  EXPECT_EQ(map(kA, kA), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(map(kB, kB), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(map(kA, kB), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(map(kB, kA), (std::vector<double>{1.0, 0.0}));
  EXPECT_DOUBLE_EQ(map.scale(), 2.0);
  const auto c = CheckConditions(map, std::vector<double>{0.5, 0.5}, BinaryCoinPair(0.5, 0.5));
  EXPECT_EQ(c.successors_with_zero, 4);
}

TEST(BuildSuccessorTest, SkewedCoinsSatisfyConditionsWithOneBoundarySuccessor) {
  const BinaryCoinPair coins(0.3, 0.7);
  const std::vector<double> lambda{0.2, 0.8};
  const auto map = BuildSuccessor(lambda, coins);
  const auto c = CheckConditions(map, lambda, coins);
  EXPECT_LE(c.worst_martingale_error, 1e-12);
  EXPECT_TRUE(c.in_simplex);
  EXPECT_TRUE(c.has_smaller_support);
  EXPECT_EQ(c.successors_with_zero, 1);
  ASSERT_TRUE(map.shrink_pair().has_value());
  EXPECT_EQ(*map.shrink_pair(), (LetterPair{kA, kB}));
  EXPECT_EQ(map(kA, kB), (std::vector<double>{0.0, 1.0}));
}

TEST(BuildSuccessorTest, ConditionsHoldOnRandomBeliefsAndCoins) {
  Stream rng(21, "successor-property");
  for (std::size_t n : {2u, 3u, 5u}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const BinaryCoinPair coins(0.01 + 0.98 * rng.uniform(), 0.01 + 0.98 * rng.uniform());
      std::vector<double> lambda(n);
      double total = 0.0;
      for (double& v : lambda) {
        v = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
        total += v;
      }
      if (total == 0.0) lambda[0] = total = 1.0;
      for (double& v : lambda) v /= total;
      ValidateMass(lambda);
      const auto map = BuildSuccessor(lambda, coins);
      const auto c = CheckConditions(map, lambda, coins);
      EXPECT_LE(c.worst_martingale_error, 1e-9);
      EXPECT_TRUE(c.in_simplex);
      if (SupportSize(lambda) > 1) {
        EXPECT_TRUE(c.has_smaller_support);
        ASSERT_TRUE(map.shrink_pair().has_value());
        EXPECT_LT(SupportSize(map(*map.shrink_pair())), SupportSize(lambda));
      }
    }
  }
}

TEST(StepTest, DiracIsUnchangedAndXorResolves) {
  const BinaryCoinPair fair(0.5, 0.5);
  const BeliefState dirac{{1.0, 0.0}, 3};
  const auto next = Step(dirac, kA, kB, fair);
  EXPECT_EQ(next.belief, dirac.belief);
  EXPECT_EQ(next.stage, 4u);
  EXPECT_EQ(Step({{0.5, 0.5}, 0}, kA, kB, fair).belief, (std::vector<double>{1.0, 0.0}));
}

TEST(StepTest, HonestAverageOfNextBeliefsIsCurrentBelief) {
  const BinaryCoinPair coins(0.45, 0.2);
  const BeliefState s{{0.1, 0.25, 0.65}, 0};
  std::vector<double> avg(3, 0.0);
  for (int k = 0; k < 4; ++k) {
    const auto p = PairFromIndex(k);
    const auto next = Step(s, p.first, p.second, coins);
    for (std::size_t j = 0; j < 3; ++j) avg[j] += coins.pair_prob(p) * next.belief[j];
    EXPECT_LE(SupportSize(next.belief), 3u);
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(avg[j], s.belief[j], 1e-12);
}

TEST(RunWeakTest, DiracTargetStopsAtStageZero) {
  auto nu = ProbabilityVector::Dirac(MakeOutcomeSet({"j1", "j2", "j3"}), 2);
  RunStreams streams(1, 0);
  const auto res = RunWeak(BinaryCoinPair(0.3, 0.7), nu, HonestDevice(), HonestDevice(),
                           streams, 10);
  ASSERT_TRUE(res.outcome.has_value());
  EXPECT_EQ(*res.outcome, 2u);
  EXPECT_EQ(res.stages, 0u);
}

TEST(RunWeakTest, RejectsZeroBudget) {
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  RunStreams streams(1, 0);
  EXPECT_THROW(RunWeak(BinaryCoinPair(0.3, 0.7), nu, HonestDevice(), HonestDevice(), streams, 0),
               InvalidArgument);
}

TEST(RunWeakTest, FairCoinsTerminateAtStageOne) {
  const BinaryCoinPair fair(0.5, 0.5);
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  const auto s = WeakMonteCarlo(fair, nu, HonestDevice(), HonestDevice(), 31, 100000, 10);
  EXPECT_EQ(s.max_stages, 1u);
  EXPECT_EQ(s.timeouts, 0u);
  EXPECT_NEAR(s.dist.freq(0), 0.5, 0.01);
}

TEST(RunWeakTest, HonestSkewedCoinsImplementTarget) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2"}), {0.2, 0.8});
  const std::size_t budget = HonestStageBudget(coins, 2, 0.01);
  EXPECT_EQ(budget, static_cast<std::size_t>(std::ceil(2 * std::log(100.0) / 0.09)));
  const auto s = WeakMonteCarlo(coins, nu, HonestDevice(), HonestDevice(), 32, 100000, budget);
  EXPECT_LE(LinfDistance(s.dist, nu), 0.01);
  EXPECT_LE(static_cast<double>(s.timeouts) / 100000, 0.01);
}

TEST(RunWeakTest, BeliefSupportNeverGrows) {
  const BinaryCoinPair coins(0.35, 0.6);
  auto nu = ProbabilityVector(MakeOutcomeSet({"a", "b", "c", "d"}), {0.1, 0.2, 0.3, 0.4});
  for (int r = 0; r < 200; ++r) {
    RunStreams streams(33, r);
    const auto res = RunWeak(coins, nu, HonestDevice(), HonestDevice(), streams, 1000,
                             {.keep_beliefs = true});
    std::size_t prev = 4;
    for (const auto& snap : res.transcript.snapshots()) {
      const std::size_t s = SupportSize(snap.belief);
      EXPECT_LE(s, prev);
      EXPECT_NEAR(std::accumulate(snap.belief.begin(), snap.belief.end(), 0.0), 1.0, 1e-12);
      prev = s;
    }
  }
}

Transcript<WeakSnapshot> SyntheticTranscript(std::size_t stages, bool dev1_matches,
                                             bool dev2_matches) {
  Transcript<WeakSnapshot> t(true);
  const LetterPair shrink{kA, kB};
  for (std::size_t i = 0; i < stages; ++i) {
    t.append({dev1_matches ? kA : kB, dev2_matches ? kB : kA}, {shrink, {}});
  }
  return t;
}

TEST(DetectFaultTest, OneSidedPatterns) {
  const BinaryCoinPair coins(0.3, 0.7);
  EXPECT_EQ(DetectFault(SyntheticTranscript(50, false, true), coins, 50).verdict,
            Verdict::kDevice1Faulty);
  EXPECT_EQ(DetectFault(SyntheticTranscript(50, true, false), coins, 50).verdict,
            Verdict::kDevice2Faulty);
  EXPECT_EQ(DetectFault(SyntheticTranscript(50, false, false), coins, 50).verdict,
            Verdict::kInconclusive);
  EXPECT_EQ(DetectFault(SyntheticTranscript(50, true, true), coins, 50).verdict,
            Verdict::kInconclusive);
  EXPECT_EQ(DetectFault(SyntheticTranscript(49, false, true), coins, 50).verdict,
            Verdict::kInconclusive);
}

TEST(DetectFaultTest, StallingDeviceIsNamed) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2"}), {0.2, 0.8});
  const auto stall = StallingAdversary(MechanismKind::kWeak);
  const auto s1 = WeakMonteCarlo(coins, nu, stall, HonestDevice(), 34, 100, 10000);
  EXPECT_GE(s1.timeouts, 99u);
  EXPECT_EQ(s1.verdicts[static_cast<int>(Verdict::kDevice1Faulty)], s1.timeouts);
  const auto s2 = WeakMonteCarlo(coins, nu, HonestDevice(), stall, 35, 100, 10000);
  EXPECT_GE(s2.timeouts, 99u);
  EXPECT_EQ(s2.verdicts[static_cast<int>(Verdict::kDevice2Faulty)], s2.timeouts);
  const auto both = WeakMonteCarlo(coins, nu, stall, stall, 36, 20, 2000);
  EXPECT_EQ(both.verdicts[static_cast<int>(Verdict::kInconclusive)], 20u);
}

TEST(DetectFaultTest, HonestTranscriptsAreNeverBlamed) {
  const BinaryCoinPair coins(0.3, 0.7);
  const std::vector<double> lambda{0.3, 0.3, 0.4};
  const auto map = BuildSuccessor(lambda, coins);
  const DeviceStrategy honest = HonestDevice();
  StageView view;
  view.coins = &coins;
  view.kind = MechanismKind::kWeak;
  for (std::size_t r = 0; r < 2000; ++r) {
    RunStreams streams(37, r);
    Transcript<WeakSnapshot> t(true);
    for (std::size_t s = 0; s < kDefaultDetectionWindow; ++s) {
      t.append(SampleStage(honest, honest, view, streams), {map.shrink_pair(), {}});
    }
    const auto v = DetectFault(t, coins);
    EXPECT_EQ(v.verdict, Verdict::kInconclusive) << "run " << r;
  }
}

}  // namespace
}  // namespace jcl
