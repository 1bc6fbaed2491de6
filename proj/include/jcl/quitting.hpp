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

// General quitting games and the block strategy profile that replaces a
// public correlation device by strong lotteries run between the first two
// players.
//
// Play is split into blocks. Every stage of a block but the last runs one
// strong lottery over {none} + players, carried by the continue actions of
// players 1 and 2; meanwhile everyone plays the stationary profile x'. In the
// last stage the designated player (if any) quits with probability eta and
// everyone else keeps playing x'.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jcl/adversary.hpp"
#include "jcl/core.hpp"
#include "jcl/harness.hpp"
#include "jcl/rng.hpp"
#include "jcl/stats.hpp"
#include "jcl/strong.hpp"

namespace jcl {

// The game violates the two-continue-action hypothesis (or similar); names
// the offending player.
class HypothesisError : public InvalidArgument {
 public:
  HypothesisError(const std::string& player, const std::string& what)
      : InvalidArgument("player '" + player + "': " + what), player_(player) {}
  const std::string& player() const { return player_; }

 private:
  std::string player_;
};

class HorizonError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::string kQuitLabel = "Q";

// One action per player; index num_continue(i) stands for the quitting
// action Q_i.
using ActionProfile = std::vector<int>;

class QuittingGame {
 public:
  struct PayoffEntry {
    ActionProfile profile;
    std::vector<double> u;
  };

  QuittingGame(std::vector<std::string> players,
               std::vector<std::vector<std::string>> continue_actions,
               const std::vector<PayoffEntry>& payoffs)
      : players_(std::move(players)),
        continue_(std::move(continue_actions)) {
    if (players_.size() < 2) throw InvalidArgument("a game needs two players");
    if (continue_.size() != players_.size()) {
      throw InvalidArgument("continue actions must be given for every player");
    }
    OutcomeSet check(players_);  // rejects duplicates
    std::size_t n = 1;
    stride_.resize(players_.size());
    for (std::size_t i = players_.size(); i-- > 0;) {
      if (continue_[i].empty()) {
        throw HypothesisError(players_[i], "needs at least one continue action");
      }
      OutcomeSet actions(continue_[i]);
      if (actions.find(kQuitLabel) != actions.size()) {
        throw HypothesisError(players_[i], "'Q' is reserved for quitting");
      }
      stride_[i] = n;
      n *= continue_[i].size() + 1;
    }
    table_.assign(n * players_.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> seen(n, false);
    for (const auto& e : payoffs) {
      const std::size_t k = index(e.profile);
      if (seen[k]) throw InvalidArgument("duplicate payoff entry");
      seen[k] = true;
      if (e.u.size() != players_.size()) {
        throw InvalidArgument("payoff vector length does not match players");
      }
      for (std::size_t i = 0; i < e.u.size(); ++i) {
        if (!(e.u[i] >= 0.0 && e.u[i] <= 1.0)) {
          throw InvalidArgument("payoffs must lie in [0,1]");
        }
        table_[k * players_.size() + i] = e.u[i];
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw InvalidArgument("payoff function is not total: missing profiles");
    }
  }

  std::size_t num_players() const { return players_.size(); }
  const std::vector<std::string>& players() const { return players_; }
  const std::string& player(std::size_t i) const { return players_.at(i); }
  int num_continue(std::size_t i) const {
    return static_cast<int>(continue_.at(i).size());
  }
  int quit(std::size_t i) const { return num_continue(i); }
  const std::vector<std::string>& continue_actions(std::size_t i) const {
    return continue_.at(i);
  }
  const std::string& action_label(std::size_t i, int a) const {
    return a == quit(i) ? kQuitLabel : continue_.at(i).at(a);
  }
  int action_index(std::size_t i, const std::string& label) const {
    if (label == kQuitLabel) return quit(i);
    OutcomeSet actions(continue_.at(i));
    const std::size_t k = actions.find(label);
    if (k == actions.size()) {
      throw InvalidArgument("unknown action '" + label + "' for player '" +
                            players_[i] + "'");
    }
    return static_cast<int>(k);
  }
  std::size_t num_profiles() const { return table_.size() / players_.size(); }

  std::span<const double> payoff(const ActionProfile& a) const {
    return {table_.data() + index(a) * players_.size(), players_.size()};
  }

  ActionProfile profile_at(std::size_t k) const {
    ActionProfile a(players_.size());
    for (std::size_t i = 0; i < players_.size(); ++i) {
      a[i] = static_cast<int>((k / stride_[i]) % (continue_[i].size() + 1));
    }
    return a;
  }

  bool absorbing(const ActionProfile& a) const {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == quit(i)) return true;
    }
    return false;
  }

  // At least two players (the first two) with two continue actions each.
  void RequireTwoContinueActions() const {
    for (std::size_t i = 0; i < 2; ++i) {
      if (continue_[i].size() < 2) {
        throw HypothesisError(players_[i],
                              "the lottery players need at least two continue "
                              "actions");
      }
    }
  }

 private:
  std::size_t index(const ActionProfile& a) const {
    if (a.size() != players_.size()) {
      throw InvalidArgument("action profile has the wrong number of players");
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] < 0 || a[i] > quit(i)) throw InvalidArgument("action out of range");
      k += static_cast<std::size_t>(a[i]) * stride_[i];
    }
    return k;
  }

  std::vector<std::string> players_;
  std::vector<std::vector<std::string>> continue_;
  std::vector<std::size_t> stride_;
  std::vector<double> table_;
};

// Labels of the block lottery: "0" (nobody designated) followed by the
// players in order.
inline OutcomeSetPtr DesignationLabels(const QuittingGame& game) {
  std::vector<std::string> labels{"0"};
  for (const auto& p : game.players()) labels.push_back(p);
  return MakeOutcomeSet(std::move(labels));
}

struct BlockRecord {
  std::size_t designated = 0;  // index into DesignationLabels
  std::size_t row = 0;         // designation row used for the block
  ActionProfile final_profile;
};

using BlockHistory = std::vector<BlockRecord>;

// Sunspot equilibrium data of the nonabsorbing kind: everyone plays x, and
// the device designates at most one player per stage, who then quits with
// probability eta. Designation is Markov in the last outcome, which covers
// stationary and cyclic rules.
struct SunspotProfile {
  std::vector<std::vector<double>> x;       // per player, over continue actions
  std::vector<double> initial;              // over DesignationLabels
  std::vector<std::vector<double>> after;   // after[l]: following outcome l
  std::vector<double> eta;                  // per player
  std::vector<double> target_payoff;

  // Row 0 is `initial`, row 1 + l is `after[l]`.
  std::size_t row(const BlockHistory& h) const {
    return h.empty() ? 0 : 1 + h.back().designated;
  }
  const std::vector<double>& designation_row(std::size_t r) const {
    return r == 0 ? initial : after.at(r - 1);
  }
  const std::vector<double>& designation(const BlockHistory& h) const {
    return designation_row(row(h));
  }
  double quit_probability(const BlockHistory&, std::size_t player) const {
    return eta.at(player);
  }
  std::size_t num_rows() const { return 1 + after.size(); }

  void Validate(const QuittingGame& game, double epsilon) const {
    const std::size_t n = game.num_players();
    if (x.size() != n || eta.size() != n || after.size() != n + 1) {
      throw InvalidArgument("sunspot profile does not match the game's players");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i].size() != static_cast<std::size_t>(game.num_continue(i))) {
        throw HypothesisError(game.player(i),
                              "x must be a distribution over continue actions");
      }
      ValidateMass(x[i]);
      if (!(eta[i] > 0.0 && eta[i] < epsilon)) {
        throw HypothesisError(game.player(i), "eta must lie in (0, epsilon)");
      }
    }
    for (std::size_t r = 0; r < num_rows(); ++r) {
      if (designation_row(r).size() != n + 1) {
        throw InvalidArgument("designation rows must cover 0 and every player");
      }
      ValidateMass(designation_row(r));
    }
    if (!target_payoff.empty() && target_payoff.size() != n) {
      throw InvalidArgument("target payoff length does not match players");
    }
  }
};

// Mixed action over A_i^c that is within epsilon of `x` and not pure: a pure
// x has epsilon moved to the next continue action.
inline std::vector<double> PerturbPure(std::span<const double> x,
                                       double epsilon) {
  if (x.size() < 2) {
    throw InvalidArgument("perturbing a pure action needs two continue actions");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("epsilon must lie in (0,1)");
  }
  ValidateMass(x);
  std::vector<double> out(x.begin(), x.end());
  const auto it = std::find(out.begin(), out.end(), 1.0);
  if (it == out.end()) return out;
  const std::size_t a = static_cast<std::size_t>(it - out.begin());
  out[a] = 1.0 - epsilon;
  out[(a + 1) % out.size()] = epsilon;
  return out;
}

// Smallest T with P(Binomial(T, p) < needed) < epsilon.
inline std::size_t BinomialHorizon(std::size_t needed, double p,
                                   double epsilon) {
  if (p >= 1.0) return needed;
  for (std::size_t t = needed;; ++t) {
    double tail = 0.0;
    for (std::size_t k = 0; k < needed; ++k) {
      const double lp = std::lgamma(t + 1.0) - std::lgamma(k + 1.0) -
                        std::lgamma(t - k + 1.0) + k * std::log(p) +
                        (t - k) * std::log1p(-p);
      tail += std::exp(lp);
    }
    if (tail < epsilon) return t;
  }
}

// Closed-form horizon for constant eta and constant designation probability:
// the number of designated blocks needed for prod(1 - eta) <= epsilon,
// stretched to hold with probability 1 - epsilon when designation is random.
inline std::size_t HorizonClosedForm(double eta, double p_designated,
                                     double epsilon) {
  if (!(eta > 0.0) || !(p_designated > 0.0)) {
    throw HorizonError("play never terminates: no finite horizon");
  }
  if (eta >= 1.0) return 1;
  const auto needed = static_cast<std::size_t>(
      std::ceil(std::log(epsilon) / std::log1p(-eta)));
  return BinomialHorizon(needed, p_designated, epsilon);
}

// Smallest T whose Monte Carlo estimate of P(prod_{t<=T}(1 - eta^t) > eps)
// is below eps with 99% (one-sided Hoeffding) confidence.
inline std::size_t HorizonMonteCarlo(const SunspotProfile& sunspot,
                                     double epsilon, std::uint64_t seed,
                                     std::size_t runs = 10000,
                                     std::size_t max_blocks = 1000000) {
  const double slack = std::sqrt(std::log(1.0 / 0.01) / (2.0 * runs));
  if (slack >= epsilon) {
    throw HorizonError("too few runs to certify the horizon at this epsilon");
  }
  std::vector<std::size_t> hit(runs, max_blocks + 1);
  for (std::size_t r = 0; r < runs; ++r) {
    Stream stream(seed, "horizon", r);
    BlockHistory h;
    double survive = 1.0;
    for (std::size_t t = 1; t <= max_blocks; ++t) {
      const auto& row = sunspot.designation(h);
      double u = stream.uniform();
      std::size_t label = row.size() - 1;
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (u < row[k]) { label = k; break; }
        u -= row[k];
      }
      if (label > 0) survive *= 1.0 - sunspot.quit_probability(h, label - 1);
      h.push_back({label, sunspot.row(h), {}});
      if (h.size() > 1) h.erase(h.begin());  // Markov: only the last matters
      if (survive <= epsilon) {
        hit[r] = t;
        break;
      }
    }
  }
  std::sort(hit.begin(), hit.end());
  // Need #{hit > T} / runs < epsilon - slack.
  const double allowed = (epsilon - slack) * static_cast<double>(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const std::size_t t = hit[i];
    if (t > max_blocks) break;
    const auto beyond = static_cast<double>(
        runs - (std::upper_bound(hit.begin(), hit.end(), t) - hit.begin()));
    if (beyond < allowed) return t;
  }
  throw HorizonError("play does not terminate within the block budget");
}

struct Horizon {
  std::size_t blocks = 0;
  bool closed_form = false;
};

inline Horizon HorizonT(const SunspotProfile& sunspot, double epsilon,
                        std::uint64_t seed, std::size_t runs = 10000) {
  const double eta = sunspot.eta.at(0);
  const bool constant_eta =
      std::all_of(sunspot.eta.begin(), sunspot.eta.end(),
                  [&](double e) { return e == eta; });
  const double p = 1.0 - sunspot.initial.at(0);
  bool constant_p = true;
  for (std::size_t r = 0; r < sunspot.num_rows(); ++r) {
    constant_p = constant_p && (1.0 - sunspot.designation_row(r).at(0)) == p;
  }
  if (constant_eta && constant_p) {
    return {HorizonClosedForm(eta, p, epsilon), true};
  }
  return {HorizonMonteCarlo(sunspot, epsilon, seed, runs), false};
}

struct BlockProfile {
  std::shared_ptr<const QuittingGame> game;
  SunspotProfile sunspot;
  double epsilon = 0.0;
  std::size_t horizon_blocks = 0;  // T
  double block_accuracy = 0.0;     // epsilon / T
  std::vector<std::vector<double>> x_prime;
  std::array<std::vector<Letter>, 2> letter_of;  // lottery partitions
  BinaryCoinPair coins{0.5, 0.5};
  double threshold = 0.0;  // C
  OutcomeSetPtr labels;
  std::vector<IntervalPartition> row_partitions;  // per designation row
  std::vector<CalibrationResult> calibrations;    // per designation row

  std::size_t num_players() const { return game->num_players(); }

  // Expected honest lottery length plus the final stage.
  double expected_block_stages() const {
    const ScoreTable w(coins);
    double e = 0.0;
    for (int k = 0; k < 4; ++k) {
      const LetterPair p = PairFromIndex(k);
      e += coins.pair_prob(p) * w(p) * w(p);
    }
    return threshold / e + 1.0;
  }
};

struct BlockOptions {
  std::optional<std::size_t> horizon_blocks;
  std::optional<double> threshold;
  CalibrationOptions calibration{.max_doublings = 20};
  std::size_t horizon_runs = 10000;
};

// Prefix split of the continue actions whose mass is closest to one half
// with both sides positive.
inline std::vector<Letter> LotteryPartition(std::span<const double> x) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t cut = 0;
  double prefix = 0.0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    prefix += x[k];
    if (prefix > 0.0 && prefix < 1.0 && std::abs(prefix - 0.5) < best) {
      best = std::abs(prefix - 0.5);
      cut = k + 1;
    }
  }
  if (cut == 0) throw InvalidArgument("lottery coin would be degenerate");
  std::vector<Letter> letters(x.size(), Letter::kBeta);
  for (std::size_t k = 0; k < cut; ++k) letters[k] = Letter::kAlpha;
  return letters;
}

inline BlockProfile BuildBlockProfile(std::shared_ptr<const QuittingGame> game,
                                      SunspotProfile sunspot, double epsilon,
                                      std::uint64_t seed,
                                      BlockOptions options = {}) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("epsilon must lie in (0,1)");
  }
  game->RequireTwoContinueActions();
  sunspot.Validate(*game, epsilon);

  BlockProfile bp;
  bp.game = game;
  bp.epsilon = epsilon;
  bp.labels = DesignationLabels(*game);
  bp.x_prime = sunspot.x;
  for (std::size_t i = 0; i < 2; ++i) {
    bp.x_prime[i] = PerturbPure(sunspot.x[i], epsilon);
    bp.letter_of[i] = LotteryPartition(bp.x_prime[i]);
  }
  auto coin = [&](std::size_t i) {
    double a = 0.0;
    for (std::size_t k = 0; k < bp.x_prime[i].size(); ++k) {
      if (bp.letter_of[i][k] == Letter::kAlpha) a += bp.x_prime[i][k];
    }
    return a;
  };
  bp.coins = BinaryCoinPair(coin(0), coin(1));
  bp.horizon_blocks = options.horizon_blocks
                          ? *options.horizon_blocks
                          : HorizonT(sunspot, epsilon, SubSeed(seed, "horizon"),
                                     options.horizon_runs).blocks;
  if (bp.horizon_blocks < 1) throw InvalidArgument("horizon must be at least one block");
  bp.block_accuracy = epsilon / static_cast<double>(bp.horizon_blocks);

  // The per-block target epsilon/T is far below what a desk-scale Monte
  // Carlo can resolve, so each row is calibrated on honest play to the
  // sampling margin, starting from four smallest squared scores.
  if (options.threshold) {
    if (!(*options.threshold > 0.0)) throw InvalidArgument("threshold must be positive");
    bp.threshold = *options.threshold;
  } else {
    CalibrationOptions cal = options.calibration;
    if (cal.c_start <= 0.0) cal.c_start = DefaultCalibrationStart(bp.coins, 1.0);
    for (std::size_t r = 0; r < sunspot.num_rows(); ++r) {
      ProbabilityVector nu(bp.labels, sunspot.designation_row(r));
      auto result = CalibrateC(bp.coins, nu, bp.block_accuracy, {},
                               SubSeed(seed, "block-calibration", r), cal);
      if (!result.converged) {
        throw CalibrationError("block lottery calibration did not converge");
      }
      bp.threshold = std::max(bp.threshold, result.c);
      bp.calibrations.push_back(std::move(result));
    }
  }
  for (std::size_t r = 0; r < sunspot.num_rows(); ++r) {
    bp.row_partitions.push_back(
        BuildPartition(ProbabilityVector(bp.labels, sunspot.designation_row(r))));
  }
  bp.sunspot = std::move(sunspot);
  return bp;
}

// What a player sees before choosing an action.
struct PlayView {
  std::size_t player = 0;
  std::size_t stage = 1;
  std::size_t block = 1;
  std::size_t stage_in_block = 1;
  bool lottery_stage = true;
  std::optional<std::size_t> designated;  // last stage of a block only
  double eta = 0.0;                       // quit probability if designated
  const BlockProfile* profile = nullptr;
  double sum_y = 0.0;
  double sum_y2 = 0.0;
  const IntervalPartition* partition = nullptr;
  std::span<const BlockRecord> history;
};

// Chooses an action index for the deviating player.
using ActionRule = std::function<int(const PlayView&, Stream&)>;

struct Deviation {
  std::size_t player = 0;
  std::string name;
  ActionRule rule;
  // When set, the rule plays this fixed mixed continue action at every
  // lottery stage after the first one of a block.
  std::optional<std::vector<double>> lottery_mix;
};

struct PlayResult {
  std::optional<std::size_t> absorption_stage;
  ActionProfile last_profile;
  std::vector<double> payoff;
  std::size_t blocks = 0;
  BlockHistory history;
};

using StageObserver = std::function<void(const PlayView&, const ActionProfile&)>;

struct PlayOptions {
  std::size_t horizon_blocks = 0;  // 0: four times T
  std::size_t horizon_stages = 0;  // 0: no stage cap
  bool keep_history = false;
  // Simulate every lottery stage one by one instead of advancing stationary
  // stretches in exactly sampled chunks. Implied by `observer`.
  bool stagewise = false;
  StageObserver observer{};        // every simulated stage
  StageObserver block_observer{};  // first stage of every block
  std::size_t jobs = 1;          // threads used by the estimators
};

inline int SampleAction(std::span<const double> mix, Stream& stream) {
  double u = stream.uniform();
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (u < mix[k]) return static_cast<int>(k);
    u -= mix[k];
  }
  // Rounding left u just past the last bucket: take the last positive one.
  for (std::size_t k = mix.size(); k-- > 0;) {
    if (mix[k] > 0.0) return static_cast<int>(k);
  }
  return 0;
}

// The prescribed action for `view.player`.
inline int ProfileAction(const PlayView& view, Stream& stream) {
  const auto& xp = view.profile->x_prime[view.player];
  if (!view.lottery_stage && view.designated &&
      *view.designated == view.player + 1) {
    if (stream.uniform() < view.eta) {
      return view.profile->game->quit(view.player);
    }
  }
  return SampleAction(xp, stream);
}

namespace internal {

// Minimum chunk worth a multinomial draw.
inline constexpr std::size_t kMinChunk = 4;

struct PayoffAccumulator {
  std::vector<double> sum;
  std::uint64_t stages = 0;
  explicit PayoffAccumulator(std::size_t n) : sum(n, 0.0) {}
  void add(std::span<const double> u, std::uint64_t times = 1) {
    for (std::size_t i = 0; i < u.size(); ++i) sum[i] += u[i] * static_cast<double>(times);
    stages += times;
  }
  std::vector<double> average() const {
    std::vector<double> a = sum;
    for (double& v : a) v /= static_cast<double>(std::max<std::uint64_t>(stages, 1));
    return a;
  }
};

struct PlayerStreams {
  std::vector<Stream> streams;
  PlayerStreams(std::uint64_t seed, std::size_t run, std::size_t players) {
    for (std::size_t i = 0; i < players; ++i) {
      streams.emplace_back(seed, "player" + std::to_string(i), run);
    }
  }
};

// Law of one stationary lottery stage: letter probabilities of the two
// lottery players and the expected stage payoff given the letter pair.
struct StationaryLottery {
  std::array<double, 2> p_alpha{};
  std::array<double, 4> pair_prob{};
  std::array<std::vector<double>, 4> payoff;  // by PairIndex
  double max_y2 = 0.0;

  StationaryLottery(const BlockProfile& profile,
                    const std::vector<std::vector<double>>& mix) {
    const QuittingGame& game = *profile.game;
    const ScoreTable w(profile.coins);
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t k = 0; k < mix[d].size(); ++k) {
        if (profile.letter_of[d][k] == Letter::kAlpha) p_alpha[d] += mix[d][k];
      }
    }
    for (int k = 0; k < 4; ++k) {
      const LetterPair lp = PairFromIndex(k);
      pair_prob[k] = (lp.first == Letter::kAlpha ? p_alpha[0] : 1.0 - p_alpha[0]) *
                     (lp.second == Letter::kAlpha ? p_alpha[1] : 1.0 - p_alpha[1]);
      payoff[k].assign(game.num_players(), 0.0);
      if (pair_prob[k] <= 0.0) continue;
      max_y2 = std::max(max_y2, w(lp) * w(lp));
      // E[u | letters]: lottery players conditioned on their side.
      for (std::size_t idx = 0; idx < game.num_profiles(); ++idx) {
        const ActionProfile a = game.profile_at(idx);
        if (game.absorbing(a)) continue;
        double p = 1.0;
        for (std::size_t i = 0; i < a.size() && p > 0.0; ++i) {
          double m = mix[i][a[i]];
          if (i < 2) {
            const Letter side = i == 0 ? lp.first : lp.second;
            const double side_mass = side == Letter::kAlpha ? p_alpha[i] : 1.0 - p_alpha[i];
            m = profile.letter_of[i][a[i]] == side ? m / side_mass : 0.0;
          }
          p *= m;
        }
        if (p <= 0.0) continue;
        const auto u = game.payoff(a);
        for (std::size_t i = 0; i < u.size(); ++i) payoff[k][i] += p * u[i];
      }
    }
  }
};

// Counts of the four letter pairs over m independent stationary stages.
inline std::array<std::uint64_t, 4> SamplePairCounts(const StationaryLottery& law,
                                                     std::uint64_t m, Stream& stream) {
  auto binomial = [&](std::uint64_t n, double p) -> std::uint64_t {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return std::binomial_distribution<std::uint64_t>(n, p)(stream.engine());
  };
  const std::uint64_t first_alpha = binomial(m, law.p_alpha[0]);
  const std::uint64_t aa = binomial(first_alpha, law.p_alpha[1]);
  const std::uint64_t ba = binomial(m - first_alpha, law.p_alpha[1]);
  std::array<std::uint64_t, 4> counts{};
  counts[PairIndex({Letter::kAlpha, Letter::kAlpha})] = aa;
  counts[PairIndex({Letter::kAlpha, Letter::kBeta})] = first_alpha - aa;
  counts[PairIndex({Letter::kBeta, Letter::kAlpha})] = ba;
  counts[PairIndex({Letter::kBeta, Letter::kBeta})] = m - first_alpha - ba;
  return counts;
}

}  // namespace internal

// Simulates one run of the block profile, optionally with one deviating
// player, until absorption or the horizon. Lottery stretches in which every
// player's continue action is stationary (all honest players, and a deviator
// declaring `lottery_mix`) are advanced in chunks: the letter-pair counts of
// a chunk are drawn from their multinomial law and the chunk is short enough
// that the lottery cannot stop inside it, so the lottery state, the stage
// count and the absorption stage have exactly the stage-by-stage law. Stage
// payoffs inside a chunk enter the running average through their
// conditional expectation given the letters.
inline PlayResult Play(const BlockProfile& profile,
                       const std::optional<Deviation>& deviation,
                       std::uint64_t seed, std::size_t run,
                       const PlayOptions& options = {}) {
  const QuittingGame& game = *profile.game;
  const std::size_t n = game.num_players();
  const std::size_t horizon_blocks =
      options.horizon_blocks > 0 ? options.horizon_blocks : 4 * profile.horizon_blocks;
  const std::size_t horizon_stages = options.horizon_stages > 0
                                         ? options.horizon_stages
                                         : std::numeric_limits<std::size_t>::max();
  internal::PlayerStreams ps(seed, run, n);
  Stream chunk_stream(seed, "lottery-chunks", run);
  const ScoreTable w(profile.coins);
  const double root_c = std::sqrt(profile.threshold);
  const double stop_at = profile.threshold * (1.0 - kStopSlack);
  const std::size_t lottery_bound = StrongStageBound(profile.coins, profile.threshold);

  std::optional<internal::StationaryLottery> law;
  const bool deviator_stationary = !deviation || deviation->lottery_mix.has_value();
  if (!options.stagewise && !options.observer && deviator_stationary) {
    std::vector<std::vector<double>> mix = profile.x_prime;
    if (deviation) mix[deviation->player] = *deviation->lottery_mix;
    law.emplace(profile, mix);
  }

  PlayResult result;
  internal::PayoffAccumulator acc(n);
  BlockHistory history;
  ActionProfile a(n);
  PlayView view;
  view.profile = &profile;
  std::size_t stage = 0;

  auto finish = [&](std::size_t block) {
    result.blocks = block;
    if (options.keep_history) result.history = history;
    return result;
  };

  // Plays one stage; returns true when the game absorbed.
  auto play_stage = [&]() {
    ++stage;
    view.stage = stage;
    view.history = history;
    for (std::size_t i = 0; i < n; ++i) {
      view.player = i;
      view.eta = profile.sunspot.quit_probability(history, i);
      a[i] = deviation && deviation->player == i
                 ? deviation->rule(view, ps.streams[i])
                 : ProfileAction(view, ps.streams[i]);
    }
    if (options.observer) options.observer(view, a);
    if (options.block_observer && view.stage_in_block == 1) {
      options.block_observer(view, a);
    }
    const auto u = game.payoff(a);
    if (game.absorbing(a)) {
      result.absorption_stage = stage;
      result.last_profile = a;
      result.payoff.assign(u.begin(), u.end());
      return true;
    }
    acc.add(u);
    return false;
  };

  std::size_t block = 1;
  for (; block <= horizon_blocks && stage < horizon_stages; ++block) {
    const std::size_t row = profile.sunspot.row(history);
    const IntervalPartition& part = profile.row_partitions[row];
    view.block = block;
    view.partition = &part;
    view.lottery_stage = true;
    view.designated.reset();
    view.sum_y = 0.0;
    view.sum_y2 = 0.0;
    std::size_t s = 1;
    while (true) {
      view.stage_in_block = s;
      std::uint64_t m = 0;
      if (law && s > 1) {
        // Largest m with sum_y2 + m * max_y2 < stop_at.
        const double room = (stop_at - view.sum_y2) / law->max_y2;
        m = room > 1.0 ? static_cast<std::uint64_t>(std::ceil(room)) - 1 : 0;
        m = std::min<std::uint64_t>(m, horizon_stages - stage);
        m = std::min<std::uint64_t>(m, lottery_bound - s + 1);
      }
      if (m >= internal::kMinChunk) {
        const auto counts = internal::SamplePairCounts(*law, m, chunk_stream);
        for (int k = 0; k < 4; ++k) {
          if (counts[k] == 0) continue;
          const double y = w(PairFromIndex(k));
          view.sum_y += static_cast<double>(counts[k]) * y;
          view.sum_y2 += static_cast<double>(counts[k]) * y * y;
          acc.add(law->payoff[k], counts[k]);
        }
        stage += m;
        s += m;
        if (stage >= horizon_stages) break;
        continue;
      }
      if (play_stage()) return finish(block);
      const LetterPair letters{profile.letter_of[0][a[0]], profile.letter_of[1][a[1]]};
      const double y = w(letters);
      view.sum_y += y;
      view.sum_y2 += y * y;
      if (view.sum_y2 >= stop_at) break;
      if (s >= lottery_bound) throw InternalError("block lottery exceeded its bound");
      if (stage >= horizon_stages) break;
      ++s;
    }
    if (stage >= horizon_stages) break;
    const std::size_t outcome = part.locate(view.sum_y / root_c);
    view.lottery_stage = false;
    view.designated = outcome;
    view.stage_in_block = s + 1;
    if (play_stage()) {
      history.push_back({outcome, row, a});
      return finish(block);
    }
    history.push_back({outcome, row, a});
  }
  result.payoff = acc.average();
  return finish(std::min(block, horizon_blocks));
}

// Stationary play of a mixed profile over A_i (continue actions then Q).
struct StationaryProfile {
  std::vector<std::vector<double>> mix;
};

inline PlayResult PlayStationary(const QuittingGame& game,
                                 const StationaryProfile& profile,
                                 const std::optional<Deviation>& deviation,
                                 std::uint64_t seed, std::size_t run,
                                 std::size_t horizon_stages) {
  if (horizon_stages < 1) throw InvalidArgument("horizon must be at least one stage");
  const std::size_t n = game.num_players();
  internal::PlayerStreams ps(seed, run, n);
  PlayResult result;
  internal::PayoffAccumulator acc(n);
  ActionProfile a(n);
  PlayView view;
  for (std::size_t t = 1; t <= horizon_stages; ++t) {
    view.stage = t;
    view.block = t;
    view.lottery_stage = false;
    for (std::size_t i = 0; i < n; ++i) {
      view.player = i;
      a[i] = deviation && deviation->player == i
                 ? deviation->rule(view, ps.streams[i])
                 : SampleAction(profile.mix[i], ps.streams[i]);
    }
    const auto u = game.payoff(a);
    if (game.absorbing(a)) {
      result.absorption_stage = t;
      result.last_profile = a;
      result.payoff.assign(u.begin(), u.end());
      result.blocks = t;
      return result;
    }
    acc.add(u);
  }
  result.blocks = horizon_stages;
  result.payoff = acc.average();
  return result;
}

// Closed-form payoff of a stationary absorbing profile: the conditional
// expectation of u given that the stage absorbs.
inline std::vector<double> AbsorbingPayoff(const QuittingGame& game,
                                           const StationaryProfile& profile) {
  std::vector<double> num(game.num_players(), 0.0);
  double absorb = 0.0;
  for (std::size_t k = 0; k < game.num_profiles(); ++k) {
    const ActionProfile a = game.profile_at(k);
    if (!game.absorbing(a)) continue;
    double p = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) p *= profile.mix[i][a[i]];
    absorb += p;
    const auto u = game.payoff(a);
    for (std::size_t i = 0; i < num.size(); ++i) num[i] += p * u[i];
  }
  if (absorb <= 0.0) throw InvalidArgument("profile is not absorbing");
  for (double& v : num) v /= absorb;
  return num;
}

// Per-coordinate 99% half-width used for payoff estimates.
inline double PayoffHalfWidth(std::size_t runs) {
  return 3.0 * std::sqrt(std::log(2.0 / 0.01) / (2.0 * static_cast<double>(runs)));
}

struct PayoffEstimate {
  std::vector<double> mean;
  double half_width = 0.0;
  std::size_t runs = 0;
  double absorbed_fraction = 0.0;
};

template <typename PlayOne>
PayoffEstimate EstimateWith(std::size_t players, std::size_t runs,
                            std::size_t jobs, PlayOne&& play_one) {
  if (runs < 1) throw InvalidArgument("need at least one run");
  std::vector<double> payoffs(runs * players);
  std::vector<char> absorbed(runs, 0);
  ParallelChunks(runs, jobs, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t r = begin; r < end; ++r) {
      const PlayResult res = play_one(r);
      std::copy(res.payoff.begin(), res.payoff.end(), payoffs.begin() + r * players);
      absorbed[r] = res.absorption_stage.has_value();
    }
  });
  PayoffEstimate e;
  e.mean.assign(players, 0.0);
  e.runs = runs;
  for (std::size_t r = 0; r < runs; ++r) {
    for (std::size_t i = 0; i < players; ++i) e.mean[i] += payoffs[r * players + i];
  }
  for (double& m : e.mean) m /= static_cast<double>(runs);
  e.half_width = PayoffHalfWidth(runs);
  e.absorbed_fraction =
      static_cast<double>(std::count(absorbed.begin(), absorbed.end(), 1)) /
      static_cast<double>(runs);
  return e;
}

inline PayoffEstimate EstimatePayoff(const BlockProfile& profile,
                                     const std::optional<Deviation>& deviation,
                                     std::size_t runs, std::uint64_t seed,
                                     const PlayOptions& options = {}) {
  return EstimateWith(profile.num_players(), runs, options.jobs, [&](std::size_t r) {
    return Play(profile, deviation, seed, r, options);
  });
}

inline PayoffEstimate EstimatePayoff(const QuittingGame& game,
                                     const StationaryProfile& profile,
                                     std::size_t runs, std::uint64_t seed,
                                     std::size_t horizon_stages,
                                     std::size_t jobs = 1) {
  return EstimateWith(game.num_players(), runs, jobs, [&](std::size_t r) {
    return PlayStationary(game, profile, std::nullopt, seed, r, horizon_stages);
  });
}

// ---------------------------------------------------------------------------
// Deviations.

enum class DeviationFamily {
  kQuitAtBlock,        // quit at the first stage of block k, k = 1..T
  kConstantContinue,   // always the same continue action; never quits
  kQuitImmediately,    // quit at stage 1
  kStallLottery,       // drag the lottery out (lottery players only)
  kPushLottery,        // bias the lottery toward the best designation
};

inline std::vector<DeviationFamily> AllDeviationFamilies() {
  return {DeviationFamily::kQuitAtBlock, DeviationFamily::kConstantContinue,
          DeviationFamily::kQuitImmediately, DeviationFamily::kStallLottery,
          DeviationFamily::kPushLottery};
}

inline std::vector<double> Dirac(int size, int k) {
  std::vector<double> d(static_cast<std::size_t>(size), 0.0);
  d[static_cast<std::size_t>(k)] = 1.0;
  return d;
}

inline Deviation QuitAtBlock(const BlockProfile& profile, std::size_t player,
                             std::size_t k) {
  const int q = profile.game->quit(player);
  return {player, "quit-at-block:" + std::to_string(k),
          [q, k](const PlayView& v, Stream& s) {
            if (v.block == k && v.stage_in_block == 1) return q;
            return ProfileAction(v, s);
          },
          profile.x_prime[player]};
}

inline Deviation QuitImmediately(const BlockProfile& profile,
                                 std::size_t player) {
  const int q = profile.game->quit(player);
  return {player, "quit-immediately",
          [q](const PlayView&, Stream&) { return q; },
          std::nullopt};
}

inline Deviation ConstantContinue(const BlockProfile& profile,
                                  std::size_t player, int action) {
  return {player,
          "constant-continue:" + profile.game->action_label(player, action),
          [action](const PlayView&, Stream&) { return action; },
          Dirac(profile.game->num_continue(player), action)};
}

// Plays the lottery letters of `strategy` (a strong-mechanism device
// strategy) through continue actions, and follows the profile otherwise.
// A `stationary` strategy ignores the lottery state.
inline Deviation LotteryDeviation(const BlockProfile& profile,
                                  std::size_t player, DeviceStrategy strategy,
                                  bool stationary = false) {
  if (player > 1) throw InvalidArgument("only players 1 and 2 run the lottery");
  const auto& xp = profile.x_prime[player];
  const auto& letters = profile.letter_of[player];
  // Most likely continue action on each side of the partition.
  std::array<int, 2> pick{-1, -1};
  for (std::size_t k = 0; k < xp.size(); ++k) {
    const int side = Index(letters[k]);
    if (pick[side] < 0 || xp[k] > xp[pick[side]]) pick[side] = static_cast<int>(k);
  }
  std::optional<std::vector<double>> mix;
  if (stationary) {
    StageView sv;
    sv.device = static_cast<int>(player);
    sv.coins = &profile.coins;
    sv.kind = MechanismKind::kStrong;
    sv.threshold = profile.threshold;
    const double p = strategy.p_alpha(sv);
    mix.emplace(xp.size(), 0.0);
    (*mix)[pick[0]] += p;
    (*mix)[pick[1]] += 1.0 - p;
  }
  std::string name = strategy.name + "-lottery";
  return {player, std::move(name),
          [pick, player, strategy = std::move(strategy)](const PlayView& v,
                                                          Stream& s) {
            if (!v.lottery_stage) return ProfileAction(v, s);
            StageView sv;
            sv.device = static_cast<int>(player);
            sv.stage = v.stage_in_block;
            sv.coins = &v.profile->coins;
            sv.kind = MechanismKind::kStrong;
            sv.sum_y = v.sum_y;
            sv.sum_y2 = v.sum_y2;
            sv.threshold = v.profile->threshold;
            sv.partition = v.partition;
            const Letter l = SampleLetter(strategy.p_alpha(sv), s);
            return pick[Index(l)];
          },
          std::move(mix)};
}

struct DeviationOutcome {
  std::string name;
  double payoff = 0.0;
  double gain = 0.0;
};

struct DeviationReport {
  std::size_t player = 0;
  double on_path = 0.0;
  double ci = 0.0;  // half-width of a difference of two estimates
  double max_gain = -std::numeric_limits<double>::infinity();
  std::string argmax;
  std::vector<DeviationOutcome> outcomes;

  void add(std::string name, double payoff) {
    const double gain = payoff - on_path;
    if (gain > max_gain) {
      max_gain = gain;
      argmax = name;
    }
    outcomes.push_back({std::move(name), payoff, gain});
  }
};

// Payoffs of quitting at the first stage of block k, for every player and
// every k <= T, from one set of on-path runs. The deviation leaves play
// unchanged before block k and the other players' actions at that stage do
// not depend on it, so each on-path run determines every deviation's
// payoff. Entry [i][k] belongs to player i.
inline std::vector<std::vector<double>> QuitAtBlockPayoffs(const BlockProfile& profile,
                                                           std::size_t runs,
                                                           std::uint64_t seed,
                                                           const PlayOptions& base = {}) {
  const std::size_t T = profile.horizon_blocks;
  const std::size_t n = profile.game->num_players();
  const std::size_t stride = n * (T + 1);
  std::vector<double> per_run(runs * stride, 0.0);
  ParallelChunks(runs, base.jobs, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t r = begin; r < end; ++r) {
      std::span<double> at_block(per_run.data() + r * stride, stride);
      std::vector<bool> reached(T + 1, false);
      PlayOptions options = base;
      options.block_observer = [&](const PlayView& v, const ActionProfile& a) {
        if (v.stage_in_block != 1 || v.block > T) return;
        for (std::size_t i = 0; i < n; ++i) {
          ActionProfile dev = a;
          dev[i] = profile.game->quit(i);
          at_block[i * (T + 1) + v.block] = profile.game->payoff(dev)[i];
        }
        reached[v.block] = true;
      };
      const PlayResult res = Play(profile, std::nullopt, seed, r, options);
      for (std::size_t k = 1; k <= T; ++k) {
        if (reached[k]) continue;
        for (std::size_t i = 0; i < n; ++i) at_block[i * (T + 1) + k] = res.payoff[i];
      }
    }
  });
  std::vector<std::vector<double>> total(n, std::vector<double>(T + 1, 0.0));
  for (std::size_t r = 0; r < runs; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 1; k <= T; ++k) {
        total[i][k] += per_run[r * stride + i * (T + 1) + k];
      }
    }
  }
  for (auto& row : total) {
    for (double& t : row) t /= static_cast<double>(runs);
  }
  return total;
}

// Best label for `player` to designate: the one whose quit pays it most.
inline std::size_t PreferredDesignation(const BlockProfile& profile,
                                        std::size_t player) {
  const QuittingGame& game = *profile.game;
  std::size_t best = 1;
  double best_u = -1.0;
  for (std::size_t k = 0; k < game.num_players(); ++k) {
    ActionProfile a(game.num_players(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int>(std::max_element(profile.x_prime[i].begin(),
                                               profile.x_prime[i].end()) -
                              profile.x_prime[i].begin());
    }
    a[k] = game.quit(k);
    const double u = game.payoff(a)[player];
    if (u > best_u) {
      best_u = u;
      best = k + 1;
    }
  }
  return best;
}

// Deviation reports for every player. The on-path estimate and the
// quit-at-block payoffs come from one shared set of on-path runs.
inline std::vector<DeviationReport> DeviationGains(
    const BlockProfile& profile, const std::vector<DeviationFamily>& families,
    std::size_t runs, std::uint64_t seed, const PlayOptions& options = {}) {
  const QuittingGame& game = *profile.game;
  const std::size_t n = game.num_players();
  const std::vector<double> on_path =
      EstimatePayoff(profile, std::nullopt, runs, seed, options).mean;
  std::vector<DeviationReport> reports(n);
  for (std::size_t i = 0; i < n; ++i) {
    reports[i].player = i;
    reports[i].on_path = on_path[i];
    reports[i].ci = 2.0 * PayoffHalfWidth(runs);
  }
  auto estimate = [&](const Deviation& d, std::size_t player) {
    return EstimatePayoff(profile, d, runs, seed, options).mean[player];
  };
  for (DeviationFamily f : families) {
    if (f == DeviationFamily::kQuitAtBlock) {
      const auto payoffs = QuitAtBlockPayoffs(profile, runs, seed, options);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 1; k < payoffs[i].size(); ++k) {
          reports[i].add("quit-at-block:" + std::to_string(k), payoffs[i][k]);
        }
      }
      continue;
    }
    for (std::size_t player = 0; player < n; ++player) {
      DeviationReport& report = reports[player];
      switch (f) {
        case DeviationFamily::kQuitAtBlock:
          break;
        case DeviationFamily::kConstantContinue:
          for (int act = 0; act < game.num_continue(player); ++act) {
            const Deviation d = ConstantContinue(profile, player, act);
            report.add(d.name, estimate(d, player));
          }
          break;
        case DeviationFamily::kQuitImmediately: {
          const Deviation d = QuitImmediately(profile, player);
          report.add(d.name, estimate(d, player));
          break;
        }
        case DeviationFamily::kStallLottery:
          if (player < 2) {
            const Deviation d = LotteryDeviation(
                profile, player, StallingAdversary(MechanismKind::kStrong),
                /*stationary=*/true);
            report.add(d.name, estimate(d, player));
          }
          break;
        case DeviationFamily::kPushLottery:
          if (player < 2) {
            const std::size_t target = PreferredDesignation(profile, player);
            const Deviation d = LotteryDeviation(
                profile, player,
                GreedyPushAdversary(MechanismKind::kStrong, target,
                                    profile.labels->label(target)));
            report.add(d.name, estimate(d, player));
          }
          break;
      }
    }
  }
  return reports;
}

inline DeviationReport DeviationGain(const BlockProfile& profile,
                                     std::size_t player,
                                     const std::vector<DeviationFamily>& families,
                                     std::size_t runs, std::uint64_t seed,
                                     const PlayOptions& options = {}) {
  return DeviationGains(profile, families, runs, seed, options)[player];
}

}  // namespace jcl
