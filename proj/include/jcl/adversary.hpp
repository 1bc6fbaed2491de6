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

// Faulty-device strategies used to attack both mechanisms. Each one sees the
// whole transcript and the mechanism state, and assumes its partner is
// honest.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "jcl/core.hpp"
#include "jcl/normal.hpp"
#include "jcl/strategy.hpp"
#include "jcl/strong.hpp"
#include "jcl/weak.hpp"

namespace jcl {

namespace internal {

inline constexpr double kTieTolerance = 1e-15;

inline double AsProb(Letter l) { return l == Letter::kAlpha ? 1.0 : 0.0; }

// Letter pair with `own` in the slot of `device`.
inline LetterPair Arrange(int device, Letter own, Letter partner) {
  return device == 0 ? LetterPair{own, partner} : LetterPair{partner, own};
}

// Honest-partner expectation of f(pair) when `device` commits to `own`.
template <typename F>
double PartnerExpectation(const BinaryCoinPair& coins, int device, Letter own,
                          F&& f) {
  double e = 0.0;
  for (Letter b : {Letter::kAlpha, Letter::kBeta}) {
    e += coins.prob(1 - device, b) * f(Arrange(device, own, b));
  }
  return e;
}

// Probability that the decoded statistic lands in `target`, approximating
// the rest of the run by a Gaussian with the remaining quadratic variation.
inline double LandingProbability(const IntervalPartition& partition,
                                 std::size_t target, double c, double sum_y,
                                 double sum_y2) {
  const double root_c = std::sqrt(c);
  if (sum_y2 >= c * (1.0 - kStopSlack)) {
    return partition.locate(sum_y / root_c) == target ? 1.0 : 0.0;
  }
  if (partition.empty(target)) return 0.0;
  const double sd = std::sqrt(c - sum_y2);
  const double hi = partition.upper(target);
  const double lo = partition.lower(target);
  const double up = std::isinf(hi) ? 1.0 : NormalCdf((hi * root_c - sum_y) / sd);
  const double down =
      std::isinf(lo) ? 0.0 : NormalCdf((lo * root_c - sum_y) / sd);
  return up - down;
}

// Third derivative in the running sum of LandingProbability. Away from the
// stopping threshold the one-step lookahead value of a letter is, to third
// order, LandingProbability - (1/3) * this * E[Y^3 | letter]: the first- and
// second-order terms vanish because scores have zero mean and the Gaussian
// continuation solves the backward heat equation.
inline double LandingThirdDerivative(const IntervalPartition& partition,
                                     std::size_t target, double c,
                                     double sum_y, double sum_y2) {
  if (partition.empty(target)) return 0.0;
  const double root_c = std::sqrt(c);
  const double sd = std::sqrt(c - sum_y2);
  auto term = [&](double edge) {
    if (std::isinf(edge)) return 0.0;
    const double u = (edge * root_c - sum_y) / sd;
    return (1.0 - u * u) * NormalPdf(u);
  };
  return (term(partition.upper(target)) - term(partition.lower(target))) /
         (sd * sd * sd);
}

// Remaining quadratic variation, in units of the largest squared score,
// below which the push adversary evaluates its lookahead exactly.
inline constexpr double kExactLookaheadSteps = 16.0;

// Standard-normal median of interval j.
inline double MassCenter(const IntervalPartition& partition, std::size_t j) {
  const double lo = NormalCdf(partition.lower(j));
  const double hi = NormalCdf(partition.upper(j));
  return NormalQuantile(0.5 * (lo + hi));
}

// The letter whose score distribution against an honest partner has positive
// skew.
inline Letter PositiveLeaningLetter(const BinaryCoinPair& coins, int device) {
  const ScoreTable w(coins);
  auto third = [&](Letter a) {
    return PartnerExpectation(coins, device, a, [&](LetterPair p) {
      const double y = w(p);
      return y * y * y;
    });
  };
  return third(Letter::kAlpha) >= third(Letter::kBeta) ? Letter::kAlpha
                                                       : Letter::kBeta;
}

}  // namespace internal

// Honest play read from the view's coins, usable on either device.
inline DeviceStrategy HonestDevice() {
  return {"honest", [](const StageView& v) { return v.coins->p_alpha(v.device); }};
}

inline DeviceStrategy ConstantAdversary(Letter letter) {
  return {std::string("constant:") + ToString(letter),
          [letter](const StageView&) { return internal::AsProb(letter); }};
}

// Strong kind: one-step lookahead maximizing the chance that the decoded
// statistic lands in the target's interval. Weak kind: maximizes the
// partner-expected next belief on the target, breaking the (martingale) tie
// by the chance that the target's mass increases.
inline DeviceStrategy GreedyPushAdversary(MechanismKind kind,
                                          std::size_t target,
                                          const std::string& target_label) {
  if (kind == MechanismKind::kStrong) {
    return {"push:" + target_label, [target](const StageView& v) {
              const ScoreTable w(*v.coins);
              const auto& part = *v.partition;
              double max_w2 = 0.0;
              for (int k = 0; k < 4; ++k) {
                max_w2 = std::max(max_w2, w(PairFromIndex(k)) * w(PairFromIndex(k)));
              }
              if (v.threshold - v.sum_y2 > internal::kExactLookaheadSteps * max_w2) {
                auto third = [&](Letter a) {
                  return internal::PartnerExpectation(
                      *v.coins, v.device, a, [&](LetterPair p) {
                        const double y = w(p);
                        return y * y * y;
                      });
                };
                const double g3 = internal::LandingThirdDerivative(
                    part, target, v.threshold, v.sum_y, v.sum_y2);
                const double gain = -g3 * (third(Letter::kAlpha) - third(Letter::kBeta));
                if (gain != 0.0) return gain > 0.0 ? 1.0 : 0.0;
              }
              auto value = [&](Letter a) {
                return internal::PartnerExpectation(
                    *v.coins, v.device, a, [&](LetterPair p) {
                      const double y = w(p);
                      return internal::LandingProbability(
                          part, target, v.threshold, v.sum_y + y,
                          v.sum_y2 + y * y);
                    });
              };
              const double va = value(Letter::kAlpha);
              const double vb = value(Letter::kBeta);
              if (std::abs(va - vb) > internal::kTieTolerance) {
                return va > vb ? 1.0 : 0.0;
              }
              const double z = v.sum_y / std::sqrt(v.threshold);
              const bool above = z < internal::MassCenter(part, target);
              const Letter up = internal::PositiveLeaningLetter(*v.coins, v.device);
              return internal::AsProb(above ? up : Other(up));
            }};
  }
  return {"push:" + target_label, [target](const StageView& v) {
            const auto& map = *v.successor;
            auto expected = [&](Letter a) {
              return internal::PartnerExpectation(
                  *v.coins, v.device, a,
                  [&](LetterPair p) { return map(p)[target]; });
            };
            auto rises = [&](Letter a) {
              return internal::PartnerExpectation(
                  *v.coins, v.device, a, [&](LetterPair p) {
                    return map(p)[target] > v.belief[target] ? 1.0 : 0.0;
                  });
            };
            const double ea = expected(Letter::kAlpha);
            const double eb = expected(Letter::kBeta);
            if (std::abs(ea - eb) > 1e-12) return ea > eb ? 1.0 : 0.0;
            return rises(Letter::kAlpha) >= rises(Letter::kBeta) ? 1.0 : 0.0;
          }};
}

// Weak kind: never plays its own letter of the support-shrinking pair.
// Strong kind: minimizes the expected squared score to drag the run out.
inline DeviceStrategy StallingAdversary(MechanismKind kind) {
  if (kind == MechanismKind::kWeak) {
    return {"stall", [](const StageView& v) {
              const auto& shrink = v.successor->shrink_pair();
              if (!shrink) return v.coins->p_alpha(v.device);
              const Letter own = v.device == 0 ? shrink->first : shrink->second;
              return internal::AsProb(Other(own));
            }};
  }
  return {"stall", [](const StageView& v) {
            const ScoreTable w(*v.coins);
            auto second = [&](Letter a) {
              return internal::PartnerExpectation(
                  *v.coins, v.device, a,
                  [&](LetterPair p) { return w(p) * w(p); });
            };
            return second(Letter::kAlpha) <= second(Letter::kBeta) ? 1.0 : 0.0;
          }};
}

// Resolves a config name: "honest", "constant:alpha", "constant:beta",
// "push:<label>" or "stall".
inline DeviceStrategy MakeAdversary(const std::string& name,
                                    MechanismKind kind,
                                    const OutcomeSet& outcomes) {
  if (name == "honest") return HonestDevice();
  if (name == "constant:alpha") return ConstantAdversary(Letter::kAlpha);
  if (name == "constant:beta") return ConstantAdversary(Letter::kBeta);
  if (name == "stall") return StallingAdversary(kind);
  if (name.rfind("push:", 0) == 0) {
    const std::string label = name.substr(5);
    return GreedyPushAdversary(kind, outcomes.index_of(label), label);
  }
  throw InvalidArgument("unknown adversary '" + name + "'");
}

// Names of the finite suite standing in for "every strategy of one device".
inline std::vector<std::string> SuiteNames(const OutcomeSet& outcomes) {
  std::vector<std::string> names{"constant:alpha", "constant:beta"};
  for (const auto& l : outcomes.labels()) names.push_back("push:" + l);
  names.push_back("stall");
  return names;
}

}  // namespace jcl
