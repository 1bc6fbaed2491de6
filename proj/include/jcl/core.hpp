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

// Shared domain types: outcome sets, distributions, binary coins and the
// reduction of a finite alphabet to a binary one.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace jcl {

// Raised on invalid user input (bad distributions, degenerate coins, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an internal invariant is violated. Signals a bug, not a user
// fault.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr double kMassTolerance = 1e-12;

enum class Letter : std::uint8_t { kAlpha = 0, kBeta = 1 };

inline constexpr Letter Other(Letter l) {
  return l == Letter::kAlpha ? Letter::kBeta : Letter::kAlpha;
}

inline constexpr int Index(Letter l) { return static_cast<int>(l); }

inline const char* ToString(Letter l) {
  return l == Letter::kAlpha ? "alpha" : "beta";
}

struct LetterPair {
  Letter first = Letter::kAlpha;
  Letter second = Letter::kAlpha;

  friend bool operator==(const LetterPair&, const LetterPair&) = default;
};

// Canonical order of the four letter pairs: (a,a), (a,b), (b,a), (b,b).
inline constexpr int PairIndex(LetterPair p) {
  return 2 * Index(p.first) + Index(p.second);
}

inline constexpr LetterPair PairFromIndex(int k) {
  return {static_cast<Letter>(k / 2), static_cast<Letter>(k % 2)};
}

// The finite set J, with a fixed ordering that every index-dependent
// construction relies on.
class OutcomeSet {
 public:
  explicit OutcomeSet(std::vector<std::string> labels)
      : labels_(std::move(labels)) {
    if (labels_.empty()) throw InvalidArgument("outcome set must be nonempty");
    std::unordered_set<std::string> seen;
    for (const auto& l : labels_) {
      if (!seen.insert(l).second) {
        throw InvalidArgument("duplicate outcome label '" + l + "'");
      }
    }
  }

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }

  // Index of `label`, or size() when absent.
  std::size_t find(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    return static_cast<std::size_t>(it - labels_.begin());
  }

  std::size_t index_of(const std::string& label) const {
    std::size_t i = find(label);
    if (i == size()) throw InvalidArgument("unknown label '" + label + "'");
    return i;
  }

  friend bool operator==(const OutcomeSet& a, const OutcomeSet& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
};

using OutcomeSetPtr = std::shared_ptr<const OutcomeSet>;

inline OutcomeSetPtr MakeOutcomeSet(std::vector<std::string> labels) {
  return std::make_shared<const OutcomeSet>(std::move(labels));
}

// Checks that `mass` is a distribution (entries in [0,1], sum 1). Throws
// InvalidArgument otherwise.
inline void ValidateMass(std::span<const double> mass,
                         double tolerance = kMassTolerance) {
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0 && m <= 1.0)) {
      throw InvalidArgument("probability mass outside [0,1]");
    }
    total += m;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw InvalidArgument("probability masses sum to " +
                          std::to_string(total) + ", expected 1");
  }
}

class ProbabilityVector {
 public:
  ProbabilityVector(OutcomeSetPtr outcomes, std::vector<double> mass)
      : outcomes_(std::move(outcomes)), mass_(std::move(mass)) {
    if (!outcomes_) throw InvalidArgument("null outcome set");
    if (mass_.size() != outcomes_->size()) {
      throw InvalidArgument("mass vector length does not match outcome set");
    }
    ValidateMass(mass_);
  }

  static ProbabilityVector Uniform(OutcomeSetPtr outcomes) {
    const std::size_t n = outcomes->size();
    return ProbabilityVector(std::move(outcomes),
                             std::vector<double>(n, 1.0 / n));
  }

  static ProbabilityVector Dirac(OutcomeSetPtr outcomes, std::size_t at) {
    std::vector<double> m(outcomes->size(), 0.0);
    m.at(at) = 1.0;
    return ProbabilityVector(std::move(outcomes), std::move(m));
  }

  const OutcomeSet& outcomes() const { return *outcomes_; }
  const OutcomeSetPtr& outcomes_ptr() const { return outcomes_; }
  std::size_t size() const { return mass_.size(); }
  double operator[](std::size_t i) const { return mass_[i]; }
  double mass(const std::string& label) const {
    return mass_[outcomes_->index_of(label)];
  }
  std::span<const double> masses() const { return mass_; }

  std::vector<std::size_t> support() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < mass_.size(); ++i) {
      if (mass_[i] > 0.0) s.push_back(i);
    }
    return s;
  }

  bool is_dirac() const { return support().size() == 1; }

 private:
  OutcomeSetPtr outcomes_;
  std::vector<double> mass_;
};

// Stationary per-stage probabilities of letter alpha for the two devices.
class BinaryCoinPair {
 public:
  BinaryCoinPair(double p1_alpha, double p2_alpha)
      : p_{p1_alpha, p2_alpha} {
    for (int d = 0; d < 2; ++d) {
      if (!(p_[d] > 0.0 && p_[d] < 1.0)) {
        throw InvalidArgument(
            "device " + std::to_string(d + 1) +
            " must emit both letters with positive probability (got p_alpha=" +
            std::to_string(p_[d]) + ")");
      }
    }
  }

  // Probability that `device` (0 or 1) emits `letter`.
  double prob(int device, Letter letter) const {
    return letter == Letter::kAlpha ? p_[device] : 1.0 - p_[device];
  }
  double p1_alpha() const { return p_[0]; }
  double p2_alpha() const { return p_[1]; }
  double p_alpha(int device) const { return p_[device]; }

  // Smallest single-letter probability over both devices.
  double c0() const {
    return std::min({p_[0], 1.0 - p_[0], p_[1], 1.0 - p_[1]});
  }

  // Smallest joint probability of a letter pair under honest play.
  double c1() const {
    double m = 1.0;
    for (int k = 0; k < 4; ++k) m = std::min(m, pair_prob(PairFromIndex(k)));
    return m;
  }

  double pair_prob(LetterPair p) const {
    return prob(0, p.first) * prob(1, p.second);
  }

 private:
  double p_[2];
};

// Split of an alphabet into the letters read as alpha and the rest (beta).
class BinaryPartition {
 public:
  BinaryPartition(OutcomeSetPtr source, std::vector<std::string> to_alpha)
      : source_(std::move(source)), in_alpha_(source_->size(), false) {
    for (const auto& l : to_alpha) in_alpha_[source_->index_of(l)] = true;
    const auto n_alpha = std::count(in_alpha_.begin(), in_alpha_.end(), true);
    if (n_alpha == 0 || n_alpha == static_cast<long>(in_alpha_.size())) {
      throw InvalidArgument(
          "partition must map a nonempty proper subset of letters to alpha");
    }
  }

  const OutcomeSet& source() const { return *source_; }
  bool to_alpha(std::size_t i) const { return in_alpha_.at(i); }
  Letter letter_of(std::size_t i) const {
    return in_alpha_.at(i) ? Letter::kAlpha : Letter::kBeta;
  }

 private:
  OutcomeSetPtr source_;
  std::vector<bool> in_alpha_;
};

// Probability of alpha after collapsing `probs` through `partition`.
inline double Binarize(const BinaryPartition& partition,
                       const ProbabilityVector& probs) {
  if (!(partition.source() == probs.outcomes())) {
    throw InvalidArgument("partition and distribution use different alphabets");
  }
  double alpha = 0.0;
  double beta = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    (partition.to_alpha(i) ? alpha : beta) += probs[i];
  }
  if (alpha <= 0.0 || beta <= 0.0) {
    throw InvalidArgument(
        "binarized coin is degenerate: every letter pair needs positive "
        "probability on both sides of the partition");
  }
  return alpha / (alpha + beta);
}

}  // namespace jcl
