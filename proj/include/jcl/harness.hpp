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

// Monte Carlo driver: independent seeded runs, optionally on several
// threads, reduced in run order. Also hosts threshold calibration for the
// strong mechanism.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "jcl/adversary.hpp"
#include "jcl/core.hpp"
#include "jcl/rng.hpp"
#include "jcl/stats.hpp"
#include "jcl/strong.hpp"
#include "jcl/weak.hpp"

namespace jcl {

// Calls body(begin, end, chunk) over `jobs` contiguous chunks of [0, n).
// Chunk boundaries depend only on (n, jobs).
template <typename Body>
void ParallelChunks(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, std::max<std::size_t>(n, 1)));
  if (jobs == 1) {
    body(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(jobs);
  for (std::size_t c = 0; c < jobs; ++c) {
    const std::size_t begin = n * c / jobs;
    const std::size_t end = n * (c + 1) / jobs;
    workers.emplace_back([&body, begin, end, c] { body(begin, end, c); });
  }
}

// Derives a seed for a named sub-experiment of `root`.
inline std::uint64_t SubSeed(std::uint64_t root, std::string_view label,
                             std::uint64_t index = 0) {
  return Stream(root, label, index).next_u64();
}

struct McSummary {
  EmpiricalDistribution dist;
  std::size_t max_stages = 0;
  double mean_stages = 0.0;
  std::uint64_t timeouts = 0;
  std::array<std::uint64_t, 4> verdicts{};  // indexed by Verdict

  explicit McSummary(OutcomeSetPtr outcomes) : dist(std::move(outcomes)) {}

  void merge(const McSummary& o) {
    const double n1 = static_cast<double>(dist.total());
    const double n2 = static_cast<double>(o.dist.total());
    if (n1 + n2 > 0) {
      mean_stages = (mean_stages * n1 + o.mean_stages * n2) / (n1 + n2);
    }
    dist.merge(o.dist);
    max_stages = std::max(max_stages, o.max_stages);
    timeouts += o.timeouts;
    for (std::size_t k = 0; k < verdicts.size(); ++k) verdicts[k] += o.verdicts[k];
  }
};

namespace internal {
template <typename RunOne>
McSummary Reduce(const OutcomeSetPtr& outcomes, std::size_t runs,
                 std::size_t jobs, RunOne&& run_one) {
  jobs = std::max<std::size_t>(1, jobs);
  std::vector<McSummary> partial(jobs, McSummary(outcomes));
  ParallelChunks(runs, jobs, [&](std::size_t begin, std::size_t end,
                                 std::size_t chunk) {
    McSummary& s = partial[chunk];
    double stage_sum = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      stage_sum += static_cast<double>(run_one(r, s));
    }
    if (end > begin) stage_sum /= static_cast<double>(end - begin);
    s.mean_stages = stage_sum;
  });
  McSummary total(outcomes);
  for (const auto& p : partial) total.merge(p);
  return total;
}
}  // namespace internal

inline McSummary StrongMonteCarlo(const BinaryCoinPair& coins,
                                  const ProbabilityVector& nu, double c,
                                  const DeviceStrategy& s1,
                                  const DeviceStrategy& s2, std::uint64_t seed,
                                  std::size_t runs, std::size_t jobs = 1) {
  const IntervalPartition partition = BuildPartition(nu);
  return internal::Reduce(
      nu.outcomes_ptr(), runs, jobs, [&](std::size_t r, McSummary& s) {
        RunStreams streams(seed, r);
        const auto res = RunStrong(coins, partition, c, s1, s2, streams,
                                   {.keep_snapshots = false});
        s.dist.add(res.outcome);
        s.max_stages = std::max(s.max_stages, res.stages);
        return res.stages;
      });
}

inline McSummary WeakMonteCarlo(const BinaryCoinPair& coins,
                                const ProbabilityVector& nu,
                                const DeviceStrategy& s1,
                                const DeviceStrategy& s2, std::uint64_t seed,
                                std::size_t runs, std::size_t max_stages,
                                std::size_t jobs = 1,
                                std::size_t window = kDefaultDetectionWindow) {
  return internal::Reduce(
      nu.outcomes_ptr(), runs, jobs, [&](std::size_t r, McSummary& s) {
        RunStreams streams(seed, r);
        const auto res = RunWeak(coins, nu, s1, s2, streams, max_stages,
                                 {.keep_beliefs = false, .window = window});
        if (res.outcome) {
          s.dist.add(*res.outcome);
        } else {
          s.dist.add_unassigned();
          ++s.timeouts;
        }
        ++s.verdicts[static_cast<int>(res.verdict.verdict)];
        s.max_stages = std::max(s.max_stages, res.stages);
        return res.stages;
      });
}

struct AttackResult {
  std::string adversary;
  int device = 0;  // 0 or 1; honest entries use device 0
  double linf = 0.0;
  std::size_t max_stages = 0;
};

struct CalibrationProbe {
  double c = 0.0;
  bool passed = false;
  std::vector<AttackResult> attacks;
};

struct CalibrationResult {
  bool converged = false;
  double c = 0.0;
  double tolerance = 0.0;  // epsilon/2 + margin used as the pass criterion
  double margin = 0.0;
  std::vector<CalibrationProbe> probes;
};

struct CalibrationOptions {
  std::size_t runs_per_probe = 10000;
  // 0 selects 4 * min_w^2 / epsilon^2, the 4/epsilon^2 rule expressed in
  // units of the smallest squared score so that it scales with the coins.
  double c_start = 0.0;
  int max_doublings = 12;
  double delta = 0.01;
  std::size_t jobs = 1;
};

inline double DefaultCalibrationStart(const BinaryCoinPair& coins,
                                      double epsilon) {
  const double m = ScoreTable(coins).min_abs();
  return 4.0 * m * m / (epsilon * epsilon);
}

// Runs honest play and every suite member on each device for one threshold.
inline std::vector<AttackResult> AttackStrong(
    const BinaryCoinPair& coins, const ProbabilityVector& nu, double c,
    const std::vector<std::string>& adversaries, std::uint64_t seed,
    std::size_t runs, std::size_t jobs) {
  std::vector<AttackResult> out;
  const DeviceStrategy honest = HonestDevice();
  {
    const auto s = StrongMonteCarlo(coins, nu, c, honest, honest, seed, runs, jobs);
    out.push_back({"honest", 0, LinfDistance(s.dist, nu), s.max_stages});
  }
  for (const auto& name : adversaries) {
    if (name == "honest") continue;
    const DeviceStrategy adv = MakeAdversary(name, MechanismKind::kStrong, nu.outcomes());
    for (int d = 0; d < 2; ++d) {
      const auto s = d == 0 ? StrongMonteCarlo(coins, nu, c, adv, honest, seed, runs, jobs)
                            : StrongMonteCarlo(coins, nu, c, honest, adv, seed, runs, jobs);
      out.push_back({name, d, LinfDistance(s.dist, nu), s.max_stages});
    }
  }
  return out;
}

// Smallest C on the schedule c_start * 2^k whose honest and adversarial
// outcome distributions are all within epsilon/2 + margin of nu.
inline CalibrationResult CalibrateC(const BinaryCoinPair& coins,
                                    const ProbabilityVector& nu, double epsilon,
                                    const std::vector<std::string>& adversaries,
                                    std::uint64_t seed,
                                    CalibrationOptions options = {}) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  CalibrationResult result;
  result.margin = HoeffdingMargin(options.runs_per_probe, nu.size(), options.delta);
  result.tolerance = epsilon / 2.0 + result.margin;
  double c = options.c_start > 0.0 ? options.c_start
                                   : DefaultCalibrationStart(coins, epsilon);
  for (int k = 0; k <= options.max_doublings; ++k, c *= 2.0) {
    CalibrationProbe probe;
    probe.c = c;
    probe.attacks = AttackStrong(coins, nu, c, adversaries,
                                 SubSeed(seed, "calibrate", static_cast<std::uint64_t>(k)),
                                 options.runs_per_probe, options.jobs);
    probe.passed = std::all_of(probe.attacks.begin(), probe.attacks.end(),
                               [&](const AttackResult& a) {
                                 return a.linf <= result.tolerance;
                               });
    result.probes.push_back(probe);
    if (probe.passed) {
      result.converged = true;
      result.c = c;
      return result;
    }
  }
  return result;
}

}  // namespace jcl
