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

// Exact lottery with fault detection. The running belief over J is a
// martingale against either honest device; every stage one letter pair
// removes a label from its support, so honest play reaches a Dirac belief
// almost surely and the outcome is distributed exactly as the initial
// belief. A device that keeps avoiding its shrinking letter stalls the run
// and is identified from the transcript.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jcl/core.hpp"
#include "jcl/rng.hpp"
#include "jcl/strategy.hpp"
#include "jcl/strong.hpp"

namespace jcl {

inline constexpr double kMartingaleTolerance = 1e-9;

// Successor beliefs d(a1, a2) for one belief lambda. Under an honest device 1
// the sigma_1-weighted average of d(., a2) is lambda for each a2, and
// symmetrically for device 2.
class SuccessorMap {
 public:
  const std::vector<double>& lambda() const { return lambda_; }
  const std::vector<double>& operator()(LetterPair p) const {
    return d_[PairIndex(p)];
  }
  const std::vector<double>& operator()(Letter a1, Letter a2) const {
    return d_[PairIndex({a1, a2})];
  }
  const std::optional<LetterPair>& shrink_pair() const { return shrink_; }
  // Pairs whose successor has strictly smaller support than lambda.
  const std::array<bool, 4>& shrinking() const { return shrinking_; }
  double scale() const { return scale_; }

 private:
  friend SuccessorMap BuildSuccessor(std::span<const double>,
                                     const BinaryCoinPair&);
  std::vector<double> lambda_;
  std::array<std::vector<double>, 4> d_;
  std::array<bool, 4> shrinking_{};
  std::optional<LetterPair> shrink_;
  double scale_ = 0.0;
};

inline std::size_t SupportSize(std::span<const double> m) {
  return static_cast<std::size_t>(
      std::count_if(m.begin(), m.end(), [](double x) { return x > 0.0; }));
}

inline SuccessorMap BuildSuccessor(std::span<const double> lambda,
                                   const BinaryCoinPair& coins) {
  ValidateMass(lambda);
  SuccessorMap map;
  map.lambda_.assign(lambda.begin(), lambda.end());
  for (auto& d : map.d_) d = map.lambda_;

  const std::size_t n = lambda.size();
  std::size_t plus = n;
  for (std::size_t j = 0; j < n; ++j) {
    if (lambda[j] > 0.0 && (plus == n || lambda[j] > lambda[plus])) plus = j;
  }
  std::size_t minus = n;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == plus || !(lambda[j] > 0.0)) continue;
    if (minus == n || lambda[j] < lambda[minus]) minus = j;
  }
  if (minus == n) return map;  // Dirac: every successor is lambda itself.

  // Move mass along e_plus - e_minus, scaled by the score table so the
  // martingale identities hold for any scale; take the largest scale that
  // stays inside the simplex.
  const ScoreTable w(coins);
  std::array<double, 4> limit{};
  double s = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    const double wk = w(PairFromIndex(k));
    limit[k] = wk < 0.0 ? lambda[plus] / -wk : lambda[minus] / wk;
    s = std::min(s, limit[k]);
  }
  map.scale_ = s;
  const double pair_mass = std::min(1.0, lambda[plus] + lambda[minus]);
  for (int k = 0; k < 4; ++k) {
    const double wk = w(PairFromIndex(k));
    auto& d = map.d_[k];
    const bool binding = limit[k] <= s * (1.0 + 1e-12);
    if (binding) {
      const std::size_t hit = wk < 0.0 ? plus : minus;
      const std::size_t keep = wk < 0.0 ? minus : plus;
      d[hit] = 0.0;
      d[keep] = pair_mass;
      map.shrinking_[k] = true;
      if (!map.shrink_) map.shrink_ = PairFromIndex(k);
    } else {
      d[plus] = std::max(0.0, lambda[plus] + s * wk);
      d[minus] = pair_mass - d[plus];
    }
  }

  // (C.3)/(C.4): each honest marginal averages back to lambda.
  for (int dev = 0; dev < 2; ++dev) {
    for (Letter fixed : {Letter::kAlpha, Letter::kBeta}) {
      for (std::size_t j = 0; j < n; ++j) {
        double avg = 0.0;
        for (Letter own : {Letter::kAlpha, Letter::kBeta}) {
          const LetterPair p = dev == 0 ? LetterPair{own, fixed}
                                        : LetterPair{fixed, own};
          avg += coins.prob(dev, own) * map.d_[PairIndex(p)][j];
        }
        if (std::abs(avg - lambda[j]) > kMartingaleTolerance) {
          throw InternalError("successor map violates the martingale identity");
        }
      }
    }
  }
  for (const auto& d : map.d_) {
    double total = 0.0;
    for (double x : d) total += x;
    if (std::abs(total - 1.0) > kMassTolerance) {
      throw InternalError("successor belief is not normalized");
    }
  }
  if (!map.shrink_) throw InternalError("no support-shrinking successor");
  return map;
}

inline SuccessorMap BuildSuccessor(const ProbabilityVector& lambda,
                                   const BinaryCoinPair& coins) {
  return BuildSuccessor(lambda.masses(), coins);
}

struct BeliefState {
  std::vector<double> belief;
  std::size_t stage = 0;
};

inline BeliefState Step(const BeliefState& state, Letter a1, Letter a2,
                        const BinaryCoinPair& coins) {
  const SuccessorMap map = BuildSuccessor(state.belief, coins);
  return {map(a1, a2), state.stage + 1};
}

enum class Verdict { kNone, kDevice1Faulty, kDevice2Faulty, kInconclusive };

inline const char* ToString(Verdict v) {
  switch (v) {
    case Verdict::kNone: return "none";
    case Verdict::kDevice1Faulty: return "device1_faulty";
    case Verdict::kDevice2Faulty: return "device2_faulty";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

struct DetectionVerdict {
  Verdict verdict = Verdict::kNone;
  std::size_t window = 0;
  std::array<std::size_t, 2> matches{};  // shrink-letter plays per device
};

struct WeakSnapshot {
  std::optional<LetterPair> shrink;
  std::vector<double> belief;  // empty unless beliefs are recorded
};

inline constexpr std::size_t kDefaultDetectionWindow = 1000;
inline constexpr double kFaultyMatchRate = 0.10;

// Finite-window stand-in for the asymptotic detection events: a device that
// (almost) never plays its shrinking letter while its partner keeps playing
// its own is declared faulty. The partner threshold is c0/2 because an honest
// device plays its shrinking letter with probability at least c0.
inline DetectionVerdict DetectFault(const Transcript<WeakSnapshot>& transcript,
                                    const BinaryCoinPair& coins,
                                    std::size_t window = kDefaultDetectionWindow) {
  DetectionVerdict v;
  v.verdict = Verdict::kInconclusive;
  v.window = window;
  if (window == 0 || transcript.size() < window) return v;
  const auto letters = transcript.letters();
  const auto snaps = transcript.snapshots();
  for (std::size_t t = transcript.size() - window; t < transcript.size(); ++t) {
    if (!snaps[t].shrink) continue;
    if (letters[t].first == snaps[t].shrink->first) ++v.matches[0];
    if (letters[t].second == snaps[t].shrink->second) ++v.matches[1];
  }
  const double r1 = static_cast<double>(v.matches[0]) / window;
  const double r2 = static_cast<double>(v.matches[1]) / window;
  const double low = std::min(kFaultyMatchRate, coins.c0() / 2.0);
  const double high = coins.c0() / 2.0;
  if (r1 < low && r2 > high) {
    v.verdict = Verdict::kDevice1Faulty;
  } else if (r2 < low && r1 > high) {
    v.verdict = Verdict::kDevice2Faulty;
  }
  return v;
}

struct WeakResult {
  std::optional<std::size_t> outcome;  // empty on timeout
  std::size_t stages = 0;
  Transcript<WeakSnapshot> transcript;
  DetectionVerdict verdict;
};

struct WeakOptions {
  bool keep_beliefs = false;
  std::size_t window = kDefaultDetectionWindow;
};

// Stage budget under which honest play terminates with probability at least
// 1 - delta: ceil(|J| ln(1/delta) / c1).
inline std::size_t HonestStageBudget(const BinaryCoinPair& coins,
                                     std::size_t num_labels, double delta) {
  return static_cast<std::size_t>(
      std::ceil(num_labels * std::log(1.0 / delta) / coins.c1()));
}

inline WeakResult RunWeak(const BinaryCoinPair& coins,
                          const ProbabilityVector& nu,
                          const DeviceStrategy& s1, const DeviceStrategy& s2,
                          RunStreams& streams, std::size_t max_stages,
                          WeakOptions options = {}) {
  if (max_stages < 1) throw InvalidArgument("max_stages must be at least 1");
  WeakResult result{std::nullopt, 0, Transcript<WeakSnapshot>(true), {}};
  std::vector<double> belief(nu.masses().begin(), nu.masses().end());
  StageView view;
  view.coins = &coins;
  view.kind = MechanismKind::kWeak;
  for (std::size_t t = 1;; ++t) {
    if (SupportSize(belief) == 1) {
      result.outcome = static_cast<std::size_t>(
          std::find_if(belief.begin(), belief.end(),
                       [](double x) { return x > 0.0; }) -
          belief.begin());
      result.stages = t - 1;
      return result;
    }
    if (t > max_stages) break;
    const SuccessorMap map = BuildSuccessor(belief, coins);
    view.stage = t;
    view.history = result.transcript.letters();
    view.belief = belief;
    view.successor = &map;
    const LetterPair letters = SampleStage(s1, s2, view, streams);
    const std::size_t before = SupportSize(belief);
    belief = map(letters);
    if (SupportSize(belief) > before) {
      throw InternalError("belief support grew");
    }
    WeakSnapshot snap{map.shrink_pair(), {}};
    if (options.keep_beliefs) snap.belief = belief;
    result.transcript.append(letters, std::move(snap));
  }
  result.stages = max_stages;
  result.verdict = DetectFault(result.transcript, coins, options.window);
  return result;
}

}  // namespace jcl
