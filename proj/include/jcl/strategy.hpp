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

// Device strategies, per-stage sampling and run transcripts.

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jcl/core.hpp"
#include "jcl/rng.hpp"

namespace jcl {

class IntervalPartition;
class SuccessorMap;

enum class MechanismKind { kStrong, kWeak };

// Everything a device may condition on before emitting its next letter.
// Adversaries get the full public transcript plus the mechanism internals.
struct StageView {
  int device = 0;     // 0 for device 1, 1 for device 2
  std::size_t stage = 1;  // 1-based index of the stage about to be played
  std::span<const LetterPair> history;
  const BinaryCoinPair* coins = nullptr;
  MechanismKind kind = MechanismKind::kStrong;

  // Strong mechanism state (valid when kind == kStrong).
  double sum_y = 0.0;
  double sum_y2 = 0.0;
  double threshold = 0.0;
  const IntervalPartition* partition = nullptr;

  // Weak mechanism state (valid when kind == kWeak).
  std::span<const double> belief;
  const SuccessorMap* successor = nullptr;
};

// Behavioural strategy: probability of emitting alpha at the next stage.
struct DeviceStrategy {
  std::string name;
  std::function<double(const StageView&)> p_alpha;
};

inline DeviceStrategy Honest(double p_alpha) {
  return {"honest", [p_alpha](const StageView&) { return p_alpha; }};
}

inline DeviceStrategy Honest(const BinaryCoinPair& coins, int device) {
  return Honest(coins.p_alpha(device));
}

inline Letter SampleLetter(double p_alpha, Stream& stream) {
  if (!(p_alpha >= 0.0 && p_alpha <= 1.0)) {
    throw InternalError("strategy returned a probability outside [0,1]");
  }
  // Exactly one draw per device per stage, whatever the strategy, so that an
  // honest device sees the same draws against every opponent.
  return stream.uniform() < p_alpha ? Letter::kAlpha : Letter::kBeta;
}

// Draws the letter pair of one stage. Devices draw independently from their
// own streams given the shared view of the history.
inline LetterPair SampleStage(const DeviceStrategy& s1, const DeviceStrategy& s2,
                              StageView view, RunStreams& streams) {
  view.device = 0;
  const double p1 = s1.p_alpha(view);
  view.device = 1;
  const double p2 = s2.p_alpha(view);
  return {SampleLetter(p1, streams.device1), SampleLetter(p2, streams.device2)};
}

// Append-only record of one run. `Snapshot` is the mechanism-specific state
// after each stage.
template <typename Snapshot>
class Transcript {
 public:
  explicit Transcript(bool keep_snapshots = true)
      : keep_snapshots_(keep_snapshots) {}

  void append(LetterPair letters, Snapshot snapshot) {
    letters_.push_back(letters);
    if (keep_snapshots_) snapshots_.push_back(std::move(snapshot));
  }

  std::size_t size() const { return letters_.size(); }
  std::span<const LetterPair> letters() const { return letters_; }
  std::span<const Snapshot> snapshots() const { return snapshots_; }
  bool has_snapshots() const { return keep_snapshots_; }

 private:
  bool keep_snapshots_;
  std::vector<LetterPair> letters_;
  std::vector<Snapshot> snapshots_;
};

}  // namespace jcl
