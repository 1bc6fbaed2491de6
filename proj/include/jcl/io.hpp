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

// Experiment configs (JSON in, schema-checked, unknown keys rejected) and
// report writers (CSV rows, JSON summaries).

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jcl/core.hpp"
#include "jcl/harness.hpp"
#include "jcl/quitting.hpp"
#include "jcl/stats.hpp"

namespace jcl {

using Json = nlohmann::ordered_json;

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

namespace internal {

inline void RejectUnknownKeys(const Json& j, const std::set<std::string>& allowed,
                              const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

inline double GetNumber(const Json& j, const std::string& key,
                        const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key '" + key + "' in " + where);
  if (!j.at(key).is_number()) {
    throw ConfigError("'" + key + "' in " + where + " must be a number");
  }
  return j.at(key).get<double>();
}

inline std::uint64_t GetCount(const Json& j, const std::string& key,
                              const std::string& where) {
  const Json& v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("'" + key + "' in " + where + " must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::string GetString(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

// {label: mass, ...} in file order.
inline ProbabilityVector ParseDistribution(const Json& j,
                                          const std::string& where) {
  if (!j.is_object() || j.empty()) {
    throw ConfigError(where + " must be a nonempty object {label: mass}");
  }
  std::vector<std::string> labels;
  std::vector<double> mass;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError(where + "." + key + " must be a number");
    labels.push_back(key);
    mass.push_back(value.get<double>());
  }
  return ProbabilityVector(MakeOutcomeSet(std::move(labels)), std::move(mass));
}

// Masses of `j` over a fixed label set; missing labels get 0.
inline std::vector<double> ParseMassesOver(const Json& j, const OutcomeSet& labels,
                                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object {label: mass}");
  std::vector<double> mass(labels.size(), 0.0);
  for (const auto& [key, value] : j.items()) {
    const std::size_t k = labels.find(key);
    if (k == labels.size()) throw ConfigError("unknown label '" + key + "' in " + where);
    if (!value.is_number()) throw ConfigError(where + "." + key + " must be a number");
    mass[k] = value.get<double>();
  }
  ValidateMass(mass);
  return mass;
}

// A number, or {"letters": {letter: mass}, "partition": [letters mapped to
// alpha]} binarized on the spot.
inline double ParseCoin(const Json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  RejectUnknownKeys(j, {"letters", "partition"}, where);
  if (!j.contains("letters") || !j.contains("partition")) {
    throw ConfigError(where + " needs 'letters' and 'partition'");
  }
  const ProbabilityVector probs = ParseDistribution(j.at("letters"), where + ".letters");
  if (!j.at("partition").is_array()) {
    throw ConfigError(where + ".partition must be an array of letters");
  }
  std::vector<std::string> to_alpha;
  for (const auto& l : j.at("partition")) to_alpha.push_back(GetString(l, where + ".partition[]"));
  return Binarize(BinaryPartition(probs.outcomes_ptr(), std::move(to_alpha)), probs);
}

}  // namespace internal

struct CalibrationRequest {
  double epsilon = 0.05;
  CalibrationOptions options;
};

// Config of the lottery-strong, lottery-weak, detect and calibrate runs.
struct LotteryConfig {
  std::optional<MechanismKind> mechanism;
  BinaryCoinPair coins{0.5, 0.5};
  ProbabilityVector nu{MakeOutcomeSet({"j1"}), {1.0}};
  std::string device1 = "honest";
  std::string device2 = "honest";
  std::vector<std::string> adversaries;  // empty: the full suite
  std::optional<double> c;
  std::optional<CalibrationRequest> calibration;
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  std::optional<std::size_t> max_stages;
  std::optional<double> epsilon;
  std::size_t window = kDefaultDetectionWindow;

  const std::vector<std::string>& suite_or(std::vector<std::string>& scratch) const {
    if (!adversaries.empty()) return adversaries;
    scratch = SuiteNames(nu.outcomes());
    return scratch;
  }
};

inline LotteryConfig ParseLotteryConfig(const Json& j) {
  using namespace internal;
  const std::string where = "config";
  RejectUnknownKeys(j, {"mechanism", "p1_alpha", "p2_alpha", "nu", "device1", "device2",
                        "adversaries", "C", "calibration", "runs", "seed",
                        "max_stages", "epsilon", "window"},
                    where);
  LotteryConfig c;
  if (j.contains("mechanism")) {
    const std::string m = GetString(j.at("mechanism"), "mechanism");
    if (m == "strong") {
      c.mechanism = MechanismKind::kStrong;
    } else if (m == "weak") {
      c.mechanism = MechanismKind::kWeak;
    } else {
      throw ConfigError("mechanism must be 'strong' or 'weak'");
    }
  }
  if (!j.contains("p1_alpha") || !j.contains("p2_alpha")) {
    throw ConfigError("config needs 'p1_alpha' and 'p2_alpha'");
  }
  c.coins = BinaryCoinPair(ParseCoin(j.at("p1_alpha"), "p1_alpha"),
                           ParseCoin(j.at("p2_alpha"), "p2_alpha"));
  if (!j.contains("nu")) throw ConfigError("config needs 'nu'");
  c.nu = ParseDistribution(j.at("nu"), "nu");
  const MechanismKind kind = c.mechanism.value_or(MechanismKind::kStrong);
  auto adversary = [&](const char* key) {
    const std::string name = GetString(j.at(key), key);
    MakeAdversary(name, kind, c.nu.outcomes());  // validates the name
    return name;
  };
  if (j.contains("device1")) c.device1 = adversary("device1");
  if (j.contains("device2")) c.device2 = adversary("device2");
  if (j.contains("adversaries")) {
    if (!j.at("adversaries").is_array()) throw ConfigError("adversaries must be an array");
    for (const auto& a : j.at("adversaries")) {
      const std::string name = GetString(a, "adversaries[]");
      MakeAdversary(name, kind, c.nu.outcomes());
      c.adversaries.push_back(name);
    }
  }
  if (j.contains("C")) {
    c.c = GetNumber(j, "C", where);
    if (!(*c.c > 0.0)) throw ConfigError("C must be positive");
  }
  if (j.contains("calibration")) {
    const Json& k = j.at("calibration");
    RejectUnknownKeys(k, {"epsilon", "runs_per_probe", "c_start", "max_doublings", "delta"},
                      "calibration");
    CalibrationRequest r;
    if (k.contains("epsilon")) r.epsilon = GetNumber(k, "epsilon", "calibration");
    if (k.contains("runs_per_probe")) r.options.runs_per_probe = GetCount(k, "runs_per_probe", "calibration");
    if (k.contains("c_start")) r.options.c_start = GetNumber(k, "c_start", "calibration");
    if (k.contains("max_doublings")) {
      r.options.max_doublings = static_cast<int>(GetCount(k, "max_doublings", "calibration"));
    }
    if (k.contains("delta")) r.options.delta = GetNumber(k, "delta", "calibration");
    if (!(r.epsilon > 0.0)) throw ConfigError("calibration.epsilon must be positive");
    if (r.options.runs_per_probe < 1) throw ConfigError("calibration.runs_per_probe must be >= 1");
    c.calibration = r;
  }
  if (c.c && c.calibration) throw ConfigError("give either 'C' or 'calibration', not both");
  if (j.contains("runs")) c.runs = GetCount(j, "runs", where);
  if (j.contains("seed")) c.seed = GetCount(j, "seed", where);
  if (j.contains("max_stages")) {
    c.max_stages = GetCount(j, "max_stages", where);
    if (*c.max_stages < 1) throw ConfigError("max_stages must be >= 1");
  }
  if (j.contains("epsilon")) c.epsilon = GetNumber(j, "epsilon", where);
  if (j.contains("window")) c.window = GetCount(j, "window", where);
  return c;
}

// Game JSON: {"players": [...], "continue_actions": {player: [...]},
// "payoffs": [{"profile": {player: action}, "u": [...]}]}. Action "Q" is the
// player's quitting action.
inline QuittingGame ParseGame(const Json& j) {
  using namespace internal;
  RejectUnknownKeys(j, {"players", "continue_actions", "payoffs"}, "game");
  if (!j.contains("players") || !j.at("players").is_array()) {
    throw ConfigError("game.players must be an array");
  }
  std::vector<std::string> players;
  for (const auto& p : j.at("players")) players.push_back(GetString(p, "game.players[]"));
  if (!j.contains("continue_actions")) throw ConfigError("game needs continue_actions");
  const Json& ca = j.at("continue_actions");
  RejectUnknownKeys(ca, std::set<std::string>(players.begin(), players.end()),
                    "game.continue_actions");
  std::vector<std::vector<std::string>> actions;
  for (const auto& p : players) {
    if (!ca.contains(p) || !ca.at(p).is_array()) {
      throw ConfigError("game.continue_actions." + p + " must be an array");
    }
    std::vector<std::string> a;
    for (const auto& x : ca.at(p)) a.push_back(GetString(x, "continue action"));
    actions.push_back(std::move(a));
  }
  if (!j.contains("payoffs") || !j.at("payoffs").is_array()) {
    throw ConfigError("game.payoffs must be an array");
  }
  // Validate action names against a payoff-free game first.
  std::vector<QuittingGame::PayoffEntry> entries;
  for (const auto& e : j.at("payoffs")) {
    RejectUnknownKeys(e, {"profile", "u"}, "game.payoffs[]");
    if (!e.contains("profile") || !e.contains("u")) {
      throw ConfigError("payoff entries need 'profile' and 'u'");
    }
    const Json& prof = e.at("profile");
    RejectUnknownKeys(prof, std::set<std::string>(players.begin(), players.end()),
                      "payoff profile");
    QuittingGame::PayoffEntry entry;
    for (std::size_t i = 0; i < players.size(); ++i) {
      if (!prof.contains(players[i])) {
        throw ConfigError("payoff profile misses player '" + players[i] + "'");
      }
      const std::string a = GetString(prof.at(players[i]), "payoff profile action");
      if (a == kQuitLabel) {
        entry.profile.push_back(static_cast<int>(actions[i].size()));
      } else {
        const OutcomeSet set(actions[i]);
        const std::size_t k = set.find(a);
        if (k == set.size()) {
          throw ConfigError("unknown action '" + a + "' for player '" + players[i] + "'");
        }
        entry.profile.push_back(static_cast<int>(k));
      }
    }
    if (!e.at("u").is_array()) throw ConfigError("payoff 'u' must be an array");
    for (const auto& v : e.at("u")) {
      if (!v.is_number()) throw ConfigError("payoff values must be numbers");
      entry.u.push_back(v.get<double>());
    }
    entries.push_back(std::move(entry));
  }
  return QuittingGame(std::move(players), std::move(actions), entries);
}

// Sunspot JSON: {"x": {player: {action: mass}}, "designation": {"initial":
// {label: mass}, "after": {label: {label: mass}}} or {"stationary": {...}},
// "eta": number or {player: number}, "target_payoff": {player: number}}.
// Designation labels are "0" and the player names.
inline SunspotProfile ParseSunspot(const Json& j, const QuittingGame& game) {
  using namespace internal;
  RejectUnknownKeys(j, {"x", "designation", "eta", "target_payoff"}, "sunspot");
  const auto labels = DesignationLabels(game);
  const std::set<std::string> player_keys(game.players().begin(), game.players().end());
  SunspotProfile s;
  if (!j.contains("x")) throw ConfigError("sunspot needs 'x'");
  RejectUnknownKeys(j.at("x"), player_keys, "sunspot.x");
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const auto& p = game.player(i);
    if (!j.at("x").contains(p)) throw ConfigError("sunspot.x misses player '" + p + "'");
    s.x.push_back(ParseMassesOver(j.at("x").at(p), OutcomeSet(game.continue_actions(i)),
                                  "sunspot.x." + p));
  }
  if (!j.contains("designation")) throw ConfigError("sunspot needs 'designation'");
  const Json& d = j.at("designation");
  if (d.contains("stationary")) {
    RejectUnknownKeys(d, {"stationary"}, "sunspot.designation");
    s.initial = ParseMassesOver(d.at("stationary"), *labels, "designation.stationary");
    s.after.assign(labels->size(), s.initial);
  } else {
    RejectUnknownKeys(d, {"initial", "after"}, "sunspot.designation");
    if (!d.contains("initial") || !d.contains("after")) {
      throw ConfigError("designation needs 'initial' and 'after' (or 'stationary')");
    }
    s.initial = ParseMassesOver(d.at("initial"), *labels, "designation.initial");
    const Json& after = d.at("after");
    RejectUnknownKeys(after, std::set<std::string>(labels->labels().begin(), labels->labels().end()),
                      "designation.after");
    for (const auto& l : labels->labels()) {
      if (!after.contains(l)) throw ConfigError("designation.after misses label '" + l + "'");
      s.after.push_back(ParseMassesOver(after.at(l), *labels, "designation.after." + l));
    }
  }
  if (!j.contains("eta")) throw ConfigError("sunspot needs 'eta'");
  if (j.at("eta").is_number()) {
    s.eta.assign(game.num_players(), j.at("eta").get<double>());
  } else {
    RejectUnknownKeys(j.at("eta"), player_keys, "sunspot.eta");
    for (const auto& p : game.players()) s.eta.push_back(GetNumber(j.at("eta"), p, "sunspot.eta"));
  }
  if (j.contains("target_payoff")) {
    RejectUnknownKeys(j.at("target_payoff"), player_keys, "sunspot.target_payoff");
    for (const auto& p : game.players()) {
      s.target_payoff.push_back(GetNumber(j.at("target_payoff"), p, "target_payoff"));
    }
  }
  return s;
}

struct GameConfig {
  std::shared_ptr<const QuittingGame> game;
  SunspotProfile sunspot;
  double epsilon = 0.05;
  std::size_t runs = 10000;
  std::uint64_t seed = 1;
  BlockOptions block;
  std::size_t horizon_stages = 0;
  double gain_factor = 6.0;
};

inline Json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

// `base` resolves a game given as a relative file path.
inline GameConfig ParseGameConfig(const Json& j, const std::filesystem::path& base = {}) {
  using namespace internal;
  RejectUnknownKeys(j, {"game", "sunspot", "epsilon", "runs", "seed", "block",
                        "horizon_stages", "gain_factor"},
                    "config");
  GameConfig c;
  if (!j.contains("game")) throw ConfigError("config needs 'game'");
  if (j.at("game").is_string()) {
    c.game = std::make_shared<const QuittingGame>(
        ParseGame(ReadJsonFile(base / j.at("game").get<std::string>())));
  } else {
    c.game = std::make_shared<const QuittingGame>(ParseGame(j.at("game")));
  }
  if (!j.contains("sunspot")) throw ConfigError("config needs 'sunspot'");
  c.sunspot = ParseSunspot(j.at("sunspot"), *c.game);
  if (j.contains("epsilon")) c.epsilon = GetNumber(j, "epsilon", "config");
  if (j.contains("runs")) c.runs = GetCount(j, "runs", "config");
  if (j.contains("seed")) c.seed = GetCount(j, "seed", "config");
  if (j.contains("horizon_stages")) c.horizon_stages = GetCount(j, "horizon_stages", "config");
  if (j.contains("gain_factor")) c.gain_factor = GetNumber(j, "gain_factor", "config");
  if (j.contains("block")) {
    const Json& b = j.at("block");
    RejectUnknownKeys(b, {"horizon_blocks", "threshold", "runs_per_probe", "c_start",
                          "max_doublings", "horizon_runs"},
                      "block");
    if (b.contains("horizon_blocks")) c.block.horizon_blocks = GetCount(b, "horizon_blocks", "block");
    if (b.contains("threshold")) c.block.threshold = GetNumber(b, "threshold", "block");
    if (b.contains("runs_per_probe")) c.block.calibration.runs_per_probe = GetCount(b, "runs_per_probe", "block");
    if (b.contains("c_start")) c.block.calibration.c_start = GetNumber(b, "c_start", "block");
    if (b.contains("max_doublings")) {
      c.block.calibration.max_doublings = static_cast<int>(GetCount(b, "max_doublings", "block"));
    }
    if (b.contains("horizon_runs")) c.block.horizon_runs = GetCount(b, "horizon_runs", "block");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Reports.

// Shortest round-trip decimal form; locale independent.
inline std::string FormatDouble(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out) {
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << Quote(fields[i]);
    }
    out_ << '\n';
  }

  static std::string Quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string q = "\"";
    for (char ch : field) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  }

 private:
  std::ostream& out_;
};

inline Json DistributionReport(const EmpiricalDistribution& e,
                               const ProbabilityVector& nu, double delta = 0.01) {
  Json r;
  r["n"] = e.total();
  Json freq = Json::object();
  Json excess = Json::object();
  const auto ex = OneSidedExcess(e, nu);
  for (std::size_t j = 0; j < nu.size(); ++j) {
    freq[nu.outcomes().label(j)] = e.freq(j);
    excess[nu.outcomes().label(j)] = ex[j];
  }
  r["freq"] = freq;
  r["linf"] = LinfDistance(e, nu);
  r["margin"] = HoeffdingMargin(e.total(), nu.size(), delta);
  r["excess"] = excess;
  r["chi2"] = ChiSquare(e, nu);
  return r;
}

inline Json CalibrationReport(const CalibrationResult& c) {
  Json r;
  r["converged"] = c.converged;
  if (c.converged) {
    r["C"] = c.c;
  } else {
    r["C"] = nullptr;
  }
  r["tolerance"] = c.tolerance;
  r["margin"] = c.margin;
  Json probes = Json::array();
  for (const auto& p : c.probes) {
    Json jp;
    jp["C"] = p.c;
    jp["passed"] = p.passed;
    Json attacks = Json::array();
    for (const auto& a : p.attacks) {
      attacks.push_back({{"adversary", a.adversary},
                         {"device", a.device + 1},
                         {"linf", a.linf},
                         {"max_stages", a.max_stages}});
    }
    jp["attacks"] = attacks;
    probes.push_back(jp);
  }
  r["probes"] = probes;
  return r;
}

}  // namespace jcl
