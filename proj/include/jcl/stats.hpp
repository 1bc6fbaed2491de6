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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "jcl/core.hpp"

namespace jcl {

// Outcome counts over a fixed label set. Runs that produced no label
// (timeouts) are kept in `unassigned` so that frequencies are always
// relative to the full number of runs.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(OutcomeSetPtr outcomes)
      : outcomes_(std::move(outcomes)), counts_(outcomes_->size(), 0) {}

  void add(std::size_t label, std::uint64_t count = 1) {
    counts_.at(label) += count;
  }
  void add_unassigned(std::uint64_t count = 1) { unassigned_ += count; }

  // Associative and commutative; safe for parallel reduction.
  void merge(const EmpiricalDistribution& other) {
    if (!(*outcomes_ == *other.outcomes_)) {
      throw InvalidArgument("merging distributions over different labels");
    }
    for (std::size_t j = 0; j < counts_.size(); ++j) counts_[j] += other.counts_[j];
    unassigned_ += other.unassigned_;
  }

  const OutcomeSet& outcomes() const { return *outcomes_; }
  std::uint64_t count(std::size_t j) const { return counts_.at(j); }
  std::uint64_t unassigned() const { return unassigned_; }
  std::uint64_t total() const {
    std::uint64_t n = unassigned_;
    for (auto c : counts_) n += c;
    return n;
  }
  double freq(std::size_t j) const {
    const auto n = total();
    if (n == 0) throw InvalidArgument("empty empirical distribution");
    return static_cast<double>(counts_.at(j)) / static_cast<double>(n);
  }
  std::size_t size() const { return counts_.size(); }

 private:
  OutcomeSetPtr outcomes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t unassigned_ = 0;
};

namespace internal {
inline void CheckSameLabels(const EmpiricalDistribution& e,
                            const ProbabilityVector& nu) {
  if (!(e.outcomes() == nu.outcomes())) {
    throw InvalidArgument("empirical and target distributions use different labels");
  }
  if (e.total() == 0) throw InvalidArgument("empirical distribution has no samples");
}
}  // namespace internal

inline double LinfDistance(const EmpiricalDistribution& e,
                           const ProbabilityVector& nu) {
  internal::CheckSameLabels(e, nu);
  double d = 0.0;
  for (std::size_t j = 0; j < nu.size(); ++j) {
    d = std::max(d, std::abs(e.freq(j) - nu[j]));
  }
  return d;
}

inline double LinfDistance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("length mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

// Simultaneous (union-bound) Hoeffding half-width over `num_labels`
// frequencies at confidence 1 - delta.
inline double HoeffdingMargin(std::uint64_t n, std::size_t num_labels,
                              double delta) {
  if (n < 1) throw InvalidArgument("hoeffding margin needs n >= 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidArgument("hoeffding margin needs delta in (0,1)");
  }
  if (num_labels < 1) throw InvalidArgument("hoeffding margin needs labels");
  return std::sqrt(std::log(2.0 * num_labels / delta) / (2.0 * n));
}

inline std::vector<double> OneSidedExcess(const EmpiricalDistribution& e,
                                          const ProbabilityVector& nu) {
  internal::CheckSameLabels(e, nu);
  std::vector<double> x(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) {
    x[j] = std::max(e.freq(j) - nu[j], 0.0);
  }
  return x;
}

// Pearson statistic over labels with positive target mass. Reporting only.
inline double ChiSquare(const EmpiricalDistribution& e,
                        const ProbabilityVector& nu) {
  internal::CheckSameLabels(e, nu);
  const double n = static_cast<double>(e.total());
  double chi2 = 0.0;
  for (std::size_t j = 0; j < nu.size(); ++j) {
    if (nu[j] <= 0.0) continue;
    const double expected = n * nu[j];
    const double diff = static_cast<double>(e.count(j)) - expected;
    chi2 += diff * diff / expected;
  }
  return chi2;
}

}  // namespace jcl
