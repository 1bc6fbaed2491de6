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
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "jcl/adversary.hpp"
#include "jcl/harness.hpp"
#include "jcl/normal.hpp"
#include "jcl/strong.hpp"

namespace jcl {
namespace {

// Reference CDF built from the erf power series near the origin and the
// erfc continued fraction in the tails, in long double. Shares no code with
// NormalCdf.
long double ReferenceCdf(long double x) {
  const long double z = x / std::sqrt(2.0L);
  const long double az = std::fabs(z);
  if (az < 3.0L) {
    long double term = z;
    long double sum = z;
    for (int n = 1; n < 200; ++n) {
      term *= -z * z / n;
      const long double add = term / (2 * n + 1);
      sum += add;
      if (std::fabs(add) < 1e-30L) break;
    }
    const long double erf = 2.0L / std::sqrt(3.14159265358979323846264338327950288L) * sum;
    return 0.5L * (1.0L + erf);
  }
  // erfc(az) = exp(-az^2)/sqrt(pi) * 1/(az + 1/2/(az + 1/(az + 3/2/(az + ...))))
  long double f = az;
  for (int k = 200; k >= 1; --k) f = az + (k / 2.0L) / f;
  const long double erfc =
      std::exp(-az * az) / std::sqrt(3.14159265358979323846264338327950288L) / f;
  return z > 0 ? 1.0L - 0.5L * erfc : 0.5L * erfc;
}

long double ReferenceQuantile(long double p) {
  long double lo = -40.0L;
  long double hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (ReferenceCdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5L * (lo + hi);
}

TEST(ReferenceOracleTest, AgreesWithKnownValues) {
  EXPECT_NEAR(static_cast<double>(ReferenceCdf(0.0L)), 0.5, 1e-18);
  EXPECT_NEAR(static_cast<double>(ReferenceCdf(1.959963984540054L)), 0.975, 1e-15);
  EXPECT_NEAR(static_cast<double>(ReferenceCdf(-5.0L)), 2.866515718791939e-7, 1e-20);
}

TEST(ScoreTest, MatchesDirectSubstitution) {
  EXPECT_DOUBLE_EQ(Score(Letter::kAlpha, Letter::kAlpha, BinaryCoinPair(0.5, 0.5)), -0.25);
  EXPECT_NEAR(Score(Letter::kAlpha, Letter::kBeta, BinaryCoinPair(0.3, 0.7)), 0.49, 1e-15);
  EXPECT_NEAR(Score(Letter::kBeta, Letter::kAlpha, BinaryCoinPair(0.3, 0.7)), 0.09, 1e-15);
  EXPECT_NEAR(Score(Letter::kBeta, Letter::kBeta, BinaryCoinPair(0.3, 0.7)), -0.21, 1e-15);
}

TEST(ScoreTest, ZeroMeanAgainstEitherHonestDevice) {
  Stream rng(5, "score-property");
  for (int trial = 0; trial < 1000; ++trial) {
    const BinaryCoinPair coins(0.001 + 0.998 * rng.uniform(), 0.001 + 0.998 * rng.uniform());
    const ScoreTable w(coins);
    for (Letter fixed : {Letter::kAlpha, Letter::kBeta}) {
      const double row = coins.prob(1, Letter::kAlpha) * w(fixed, Letter::kAlpha) +
                         coins.prob(1, Letter::kBeta) * w(fixed, Letter::kBeta);
      const double col = coins.prob(0, Letter::kAlpha) * w(Letter::kAlpha, fixed) +
                         coins.prob(0, Letter::kBeta) * w(Letter::kBeta, fixed);
      EXPECT_NEAR(row, 0.0, 1e-12);
      EXPECT_NEAR(col, 0.0, 1e-12);
    }
    EXPECT_GE(w.min_abs(), coins.c0() * coins.c0() * (1 - 1e-12));
  }
}

TEST(NormalQuantileTest, ReferenceValues) {
  EXPECT_EQ(NormalQuantile(0.5), 0.0);
  EXPECT_NEAR(NormalQuantile(0.975), 1.959964, 1e-5);
  EXPECT_NEAR(NormalQuantile(0.975), static_cast<double>(ReferenceQuantile(0.975L)), 1e-12);
  EXPECT_EQ(NormalQuantile(0.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(NormalQuantile(1.0), std::numeric_limits<double>::infinity());
  EXPECT_THROW(NormalQuantile(-0.1), InvalidArgument);
  EXPECT_THROW(NormalQuantile(1.5), InvalidArgument);
}

TEST(NormalQuantileTest, InvertsReferenceCdfOnGrid) {
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 999; ++k) {
    const double p = k / 1000.0;
    const double q = NormalQuantile(p);
    EXPECT_LE(std::fabs(static_cast<double>(ReferenceCdf(q)) - p), 1e-8) << p;
    EXPECT_GT(q, prev);
    prev = q;
  }
  for (double p : {1e-10, 1e-6, 0.02425, 0.97575, 1 - 1e-6}) {
    const double q = NormalQuantile(p);
    EXPECT_NEAR(q, static_cast<double>(ReferenceQuantile(p)), 1e-7 * std::max(1.0, std::fabs(q)));
  }
}

TEST(NormalQuantileTest, Symmetric) {
  for (int k = 1; k < 500; ++k) {
    const double p = k / 1000.0;
    EXPECT_NEAR(NormalQuantile(0.5 + p) + NormalQuantile(0.5 - p), 0.0, 1e-10);
  }
}

TEST(BuildPartitionTest, UniformOverTwoSplitsAtZero) {
  auto j = MakeOutcomeSet({"j1", "j2"});
  const auto part = BuildPartition(ProbabilityVector::Uniform(j));
  ASSERT_EQ(part.breakpoints().size(), 1u);
  EXPECT_NEAR(part.breakpoints()[0], 0.0, 1e-15);
  EXPECT_EQ(part.locate(0.0), 0u);  // right-closed: a tie goes left
  EXPECT_EQ(part.locate(1e-300), 1u);
}

TEST(BuildPartitionTest, UniformOverFourMatchesReferenceQuartiles) {
  auto j = MakeOutcomeSet({"a", "b", "c", "d"});
  const auto b = BuildPartition(ProbabilityVector::Uniform(j)).breakpoints();
  ASSERT_EQ(b.size(), 3u);
  EXPECT_NEAR(b[0], static_cast<double>(ReferenceQuantile(0.25L)), 1e-9);
  EXPECT_NEAR(b[1], 0.0, 1e-12);
  EXPECT_NEAR(b[2], static_cast<double>(ReferenceQuantile(0.75L)), 1e-9);
  EXPECT_NEAR(b[2], 0.6745, 1e-4);
}

TEST(BuildPartitionTest, ZeroMassLabelsGetEmptyIntervals) {
  auto j = MakeOutcomeSet({"j1", "j2"});
  const auto part = BuildPartition(ProbabilityVector(j, {1.0, 0.0}));
  EXPECT_TRUE(part.empty(1));
  EXPECT_EQ(part.locate(1e300), 0u);

  auto k = MakeOutcomeSet({"a", "b", "c"});
  const auto mid = BuildPartition(ProbabilityVector(k, {0.4, 0.0, 0.6}));
  EXPECT_TRUE(mid.empty(1));
  for (double z = -5; z <= 5; z += 0.001) EXPECT_NE(mid.locate(z), 1u);
}

TEST(BuildPartitionTest, NormalMassMatchesTargetOnRandomInputs) {
  Stream rng(8, "partition-property");
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.next_u64() % 7;
    std::vector<std::string> labels;
    std::vector<double> m(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back("j" + std::to_string(i));
      m[i] = rng.uniform() < 0.15 ? 0.0 : rng.uniform();
      total += m[i];
    }
    if (total == 0.0) continue;
    for (double& v : m) v /= total;
    ProbabilityVector nu(MakeOutcomeSet(labels), m);
    const auto part = BuildPartition(nu);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lo = std::isinf(part.lower(i)) ? 0.0 : static_cast<double>(ReferenceCdf(part.lower(i)));
      const double hi = std::isinf(part.upper(i)) ? 1.0 : static_cast<double>(ReferenceCdf(part.upper(i)));
      const double mass = part.empty(i) ? 0.0 : hi - lo;
      EXPECT_NEAR(mass, m[i], 1e-8);
      sum += mass;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

std::vector<DeviceStrategy> AllStrongStrategies(const ProbabilityVector& nu) {
  std::vector<DeviceStrategy> s{HonestDevice()};
  for (const auto& name : SuiteNames(nu.outcomes())) {
    s.push_back(MakeAdversary(name, MechanismKind::kStrong, nu.outcomes()));
  }
  return s;
}

TEST(RunStrongTest, SingleStageWhenThresholdBelowSmallestSquaredScore) {
  for (const BinaryCoinPair coins : {BinaryCoinPair(0.5, 0.5), BinaryCoinPair(0.3, 0.7),
                                     BinaryCoinPair(0.1, 0.95)}) {
    const double m = ScoreTable(coins).min_abs();
    auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2", "j3"}));
    for (const auto& s1 : AllStrongStrategies(nu)) {
      for (int r = 0; r < 50; ++r) {
        RunStreams streams(3, r);
        const auto res = RunStrong(coins, nu, m * m, s1, HonestDevice(), streams);
        EXPECT_EQ(res.stages, 1u);
      }
    }
  }
}

// A threshold of c0^2 does not force a single stage when the coins are
// skewed: the smallest score is a product of two coin probabilities.
TEST(RunStrongTest, ThresholdAtMinCoinSquaredCanNeedMoreStages) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  std::size_t longest = 0;
  for (int r = 0; r < 200; ++r) {
    RunStreams streams(4, r);
    longest = std::max(longest, RunStrong(coins, nu, coins.c0() * coins.c0(), HonestDevice(),
                                          HonestDevice(), streams).stages);
  }
  EXPECT_GT(longest, 1u);
}

TEST(RunStrongTest, DecodesSumOverRootThreshold) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2", "j3"}), {0.2, 0.3, 0.5});
  const auto part = BuildPartition(nu);
  for (int r = 0; r < 200; ++r) {
    RunStreams streams(6, r);
    const auto res = RunStrong(coins, part, 2.0, HonestDevice(), HonestDevice(), streams);
    const ScoreTable w(coins);
    double sum = 0.0;
    double sum2 = 0.0;
    for (std::size_t t = 0; t < res.transcript.size(); ++t) {
      const double y = w(res.transcript.letters()[t]);
      sum += y;
      EXPECT_GE(sum2 + y * y, sum2);
      sum2 += y * y;
      EXPECT_DOUBLE_EQ(res.transcript.snapshots()[t].sum_y2, sum2);
      if (t + 1 < res.transcript.size()) {
        EXPECT_LT(sum2, 2.0 * (1 - 1e-12));
      }
    }
    EXPECT_GE(sum2, 2.0 * (1 - 1e-12));
    EXPECT_EQ(res.stages, res.transcript.size());
    EXPECT_DOUBLE_EQ(res.z, sum / std::sqrt(2.0));
    EXPECT_EQ(res.outcome, part.locate(res.z));
  }
}

TEST(RunStrongTest, ReplayIsDeterministic) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  RunStreams a(77, 1);
  RunStreams b(77, 1);
  const auto ra = RunStrong(coins, nu, 5.0, HonestDevice(), HonestDevice(), a);
  const auto rb = RunStrong(coins, nu, 5.0, HonestDevice(), HonestDevice(), b);
  EXPECT_EQ(ra.stages, rb.stages);
  EXPECT_EQ(ra.z, rb.z);
  ASSERT_EQ(ra.transcript.size(), rb.transcript.size());
  for (std::size_t t = 0; t < ra.transcript.size(); ++t) {
    EXPECT_EQ(ra.transcript.letters()[t], rb.transcript.letters()[t]);
  }
}

TEST(RunStrongTest, EveryStrategyStaysWithinHardStageBound) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2", "j3"}), {0.2, 0.3, 0.5});
  const double c = 1.5;
  const std::size_t bound = StrongStageBound(coins, c);
  EXPECT_EQ(bound, static_cast<std::size_t>(std::ceil(c / (0.09 * 0.09))));
  for (const auto& adv : AllStrongStrategies(nu)) {
    for (int d = 0; d < 2; ++d) {
      const auto s = d == 0 ? StrongMonteCarlo(coins, nu, c, adv, HonestDevice(), 9, 2000)
                            : StrongMonteCarlo(coins, nu, c, HonestDevice(), adv, 9, 2000);
      EXPECT_LE(s.max_stages, bound) << adv.name;
    }
  }
}

TEST(RunStrongTest, DegenerateTargetAlwaysYieldsFirstLabel) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2"}), {1.0, 0.0});
  for (const auto& adv : AllStrongStrategies(nu)) {
    const auto s = StrongMonteCarlo(coins, nu, 1.0, adv, HonestDevice(), 10, 500);
    EXPECT_EQ(s.dist.count(0), 500u) << adv.name;
  }
}

TEST(RunStrongTest, FairCoinsHonestSplitIsEven) {
  // An odd stage count (129 stages of squared score 1/16) keeps Z off the
  // breakpoint at 0, where the right-closed convention would favour j1.
  const BinaryCoinPair coins(0.5, 0.5);
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  const auto s = StrongMonteCarlo(coins, nu, 129.0 / 16.0, HonestDevice(), HonestDevice(), 11,
                                  100000);
  EXPECT_EQ(s.max_stages, 129u);
  EXPECT_NEAR(s.dist.freq(0), 0.5, 0.01);
}

TEST(CalibrateCTest, EpsilonOneAcceptsFirstProbe) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2", "j3"}), {0.2, 0.3, 0.5});
  CalibrationOptions opt;
  opt.runs_per_probe = 500;
  const auto r = CalibrateC(coins, nu, 1.0, SuiteNames(nu.outcomes()), 12, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.probes.size(), 1u);
  EXPECT_DOUBLE_EQ(r.c, DefaultCalibrationStart(coins, 1.0));
}

TEST(CalibrateCTest, DegenerateTargetAcceptsFirstProbe) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2"}), {1.0, 0.0});
  CalibrationOptions opt;
  opt.runs_per_probe = 500;
  const auto r = CalibrateC(coins, nu, 0.01, SuiteNames(nu.outcomes()), 13, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.probes.size(), 1u);
}

TEST(CalibrateCTest, ExhaustedScheduleIsReportedNotSilent) {
  const BinaryCoinPair coins(0.3, 0.7);
  auto nu = ProbabilityVector(MakeOutcomeSet({"j1", "j2"}), {0.5, 0.5});
  CalibrationOptions opt;
  opt.runs_per_probe = 200;
  opt.c_start = 1e-3;
  opt.max_doublings = 1;
  const auto r = CalibrateC(coins, nu, 1e-3, {"push:j1"}, 14, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.probes.size(), 2u);
  EXPECT_DOUBLE_EQ(r.probes[1].c, 2e-3);
}

TEST(CalibrateCTest, FairCoinsCalibratedThresholdHoldsAtLargerSample) {
  const BinaryCoinPair coins(0.5, 0.5);
  auto nu = ProbabilityVector::Uniform(MakeOutcomeSet({"j1", "j2"}));
  const auto suite = SuiteNames(nu.outcomes());
  CalibrationOptions opt;
  opt.runs_per_probe = 5000;
  const auto r = CalibrateC(coins, nu, 0.1, suite, 15, opt);
  ASSERT_TRUE(r.converged);
  EXPECT_TRUE(std::isfinite(r.c));
  constexpr std::size_t kRuns = 20000;
  const double margin = HoeffdingMargin(kRuns, 2, 0.01);
  for (const auto& a : AttackStrong(coins, nu, r.c, suite, 16, kRuns, 1)) {
    EXPECT_LE(a.linf, 0.1 + margin) << a.adversary << " on device " << a.device + 1;
  }
}

}  // namespace
}  // namespace jcl
