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

// Bounded-length lottery. Each stage adds a score that has zero mean against
// either honest device; the run stops once the accumulated squared scores
// reach a threshold C, and the normalized sum is decoded through a partition
// of the real line whose standard-normal masses equal the target
// distribution.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "jcl/core.hpp"
#include "jcl/normal.hpp"
#include "jcl/rng.hpp"
#include "jcl/strategy.hpp"

namespace jcl {

class ScoreTable {
 public:
  explicit ScoreTable(const BinaryCoinPair& coins) {
    const double a1 = coins.prob(0, Letter::kAlpha);
    const double b1 = coins.prob(0, Letter::kBeta);
    const double a2 = coins.prob(1, Letter::kAlpha);
    const double b2 = coins.prob(1, Letter::kBeta);
    w_ = {-b1 * b2, b1 * a2, a1 * b2, -a1 * a2};
  }

  double operator()(Letter a1, Letter a2) const {
    return w_[PairIndex({a1, a2})];
  }
  double operator()(LetterPair p) const { return w_[PairIndex(p)]; }

  double min_abs() const {
    double m = std::numeric_limits<double>::infinity();
    for (double w : w_) m = std::min(m, std::abs(w));
    return m;
  }

 private:
  std::array<double, 4> w_;
};

inline double Score(Letter a1, Letter a2, const BinaryCoinPair& coins) {
  return ScoreTable(coins)(a1, a2);
}

// Label j owns (b_{j-1}, b_j], with b_0 = -inf and b_{|J|} = +inf.
class IntervalPartition {
 public:
  IntervalPartition(OutcomeSetPtr outcomes, std::vector<double> upper)
      : outcomes_(std::move(outcomes)), upper_(std::move(upper)) {}

  std::size_t size() const { return upper_.size(); }
  const OutcomeSet& outcomes() const { return *outcomes_; }

  double lower(std::size_t j) const {
    return j == 0 ? -std::numeric_limits<double>::infinity() : upper_[j - 1];
  }
  double upper(std::size_t j) const { return upper_[j]; }

  // Finite breakpoints b_1..b_{|J|-1}.
  std::vector<double> breakpoints() const {
    return {upper_.begin(), upper_.end() - 1};
  }

  bool empty(std::size_t j) const { return !(lower(j) < upper(j)); }

  std::size_t locate(double z) const {
    auto it = std::lower_bound(upper_.begin(), upper_.end(), z);
    return static_cast<std::size_t>(it - upper_.begin());
  }

  double normal_mass(std::size_t j) const {
    if (empty(j)) return 0.0;
    return NormalCdf(upper(j)) - NormalCdf(lower(j));
  }

 private:
  OutcomeSetPtr outcomes_;
  std::vector<double> upper_;
};

inline IntervalPartition BuildPartition(const ProbabilityVector& nu) {
  const std::size_t n = nu.size();
  std::vector<double> upper(n, std::numeric_limits<double>::infinity());
  // Index of the last label with positive mass; everything from it on is
  // closed off at +inf so rounding in the cumulative sum cannot leave a
  // sliver for trailing zero-mass labels.
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (nu[j] > 0.0) last_positive = j;
  }
  double cumulative = 0.0;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < n; ++j) {
    cumulative += nu[j];
    if (j >= last_positive) {
      upper[j] = std::numeric_limits<double>::infinity();
    } else if (nu[j] == 0.0) {
      upper[j] = prev;
    } else {
      upper[j] = NormalQuantile(std::min(cumulative, 1.0));
    }
    prev = upper[j];
  }
  return IntervalPartition(nu.outcomes_ptr(), std::move(upper));
}

// Hard bound on the stage count: every squared score is at least
// min_abs()^2, so the threshold is reached after at most this many stages.
inline std::size_t StrongStageBound(const BinaryCoinPair& coins, double c) {
  const double m = ScoreTable(coins).min_abs();
  return static_cast<std::size_t>(std::ceil(c / (m * m)));
}

// Relative slack on the stopping comparison. Summing t equal squared scores
// in floating point can land a few ulps below t * w^2.
inline constexpr double kStopSlack = 1e-12;

struct StrongSnapshot {
  double score = 0.0;
  double sum_y = 0.0;
  double sum_y2 = 0.0;
};

struct StrongResult {
  std::size_t outcome = 0;  // index into the outcome set
  std::size_t stages = 0;
  double z = 0.0;
  Transcript<StrongSnapshot> transcript;
};

struct StrongOptions {
  bool keep_snapshots = true;
};

inline StrongResult RunStrong(const BinaryCoinPair& coins,
                              const IntervalPartition& partition, double c,
                              const DeviceStrategy& s1,
                              const DeviceStrategy& s2, RunStreams& streams,
                              StrongOptions options = {}) {
  if (!(c > 0.0)) throw InvalidArgument("threshold C must be positive");
  const ScoreTable table(coins);
  const std::size_t bound = StrongStageBound(coins, c);
  const double stop_at = c * (1.0 - kStopSlack);

  StrongResult result{0, 0, 0.0, Transcript<StrongSnapshot>(options.keep_snapshots)};
  double sum_y = 0.0;
  double sum_y2 = 0.0;
  StageView view;
  view.coins = &coins;
  view.kind = MechanismKind::kStrong;
  view.threshold = c;
  view.partition = &partition;
  for (std::size_t t = 1;; ++t) {
    view.stage = t;
    view.history = result.transcript.letters();
    view.sum_y = sum_y;
    view.sum_y2 = sum_y2;
    const LetterPair letters = SampleStage(s1, s2, view, streams);
    const double y = table(letters);
    sum_y += y;
    sum_y2 += y * y;
    result.transcript.append(letters, {y, sum_y, sum_y2});
    if (sum_y2 >= stop_at) {
      result.stages = t;
      break;
    }
    if (t >= bound) {
      throw InternalError("strong mechanism exceeded its stage bound");
    }
  }
  result.z = sum_y / std::sqrt(c);
  result.outcome = partition.locate(result.z);
  return result;
}

inline StrongResult RunStrong(const BinaryCoinPair& coins,
                              const ProbabilityVector& nu, double c,
                              const DeviceStrategy& s1,
                              const DeviceStrategy& s2, RunStreams& streams,
                              StrongOptions options = {}) {
  return RunStrong(coins, BuildPartition(nu), c, s1, s2, streams, options);
}

}  // namespace jcl
