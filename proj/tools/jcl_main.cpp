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

// Batch experiment runner.
//
//   jcl lottery-strong --config c.json [--seed S] [--runs N] [--out runs.csv]
//   jcl lottery-weak   --config c.json [--max-stages T] [--out runs.csv]
//   jcl detect         --config c.json [--max-stages T] [--out summary.json]
//   jcl calibrate      --config c.json [--eps E] [--out report.json]
//   jcl game           --config g.json --mode payoff|deviations [--out r.json]
//
// Exit codes: 0 success, 2 config error, 3 --assert gate failed, 1 other.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "jcl/io.hpp"
#include "jcl/jcl.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssert = 3;
constexpr double kDelta = 0.01;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::string out;
  std::string report;
  std::size_t jobs = 1;
  bool assert_gate = false;
  std::optional<double> eps;
  std::optional<std::size_t> max_stages;
  std::string mode = "payoff";
};

// Writes to --out, or stdout when absent.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw std::runtime_error("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void WriteJson(const std::string& path, const jcl::Json& j) {
  Output out(path);
  out.stream() << j.dump(2) << '\n';
}

int Gate(const Flags& f, bool passed, const std::string& what) {
  if (!f.assert_gate) return 0;
  if (passed) {
    spdlog::info("assert passed: {}", what);
    return 0;
  }
  spdlog::error("assert failed: {}", what);
  return kExitAssert;
}

jcl::LotteryConfig LoadLottery(const Flags& f) {
  jcl::LotteryConfig c = jcl::ParseLotteryConfig(jcl::ReadJsonFile(f.config));
  if (f.seed) c.seed = *f.seed;
  if (f.runs) c.runs = *f.runs;
  if (f.max_stages) c.max_stages = *f.max_stages;
  if (f.eps) c.epsilon = *f.eps;
  if (c.runs < 1) throw jcl::ConfigError("runs must be >= 1");
  return c;
}

double RequireEps(const std::optional<double>& eps) {
  if (!eps) throw jcl::ConfigError("--assert needs --eps or 'epsilon' in the config");
  return *eps;
}

jcl::CalibrationResult Calibrate(const jcl::LotteryConfig& c, double eps,
                                 std::size_t jobs) {
  std::vector<std::string> scratch;
  jcl::CalibrationOptions options =
      c.calibration ? c.calibration->options : jcl::CalibrationOptions{};
  options.jobs = jobs;
  spdlog::info("calibrating C for eps={} ({} runs per probe)", eps, options.runs_per_probe);
  auto result = jcl::CalibrateC(c.coins, c.nu, eps, c.suite_or(scratch),
                                jcl::SubSeed(c.seed, "calibrate"), options);
  for (const auto& p : result.probes) {
    spdlog::debug("probe C={} passed={}", p.c, p.passed);
  }
  return result;
}

int LotteryStrong(const Flags& f) {
  const jcl::LotteryConfig c = LoadLottery(f);
  double threshold = 0.0;
  if (c.c) {
    threshold = *c.c;
  } else if (c.calibration) {
    const auto cal = Calibrate(c, c.calibration->epsilon, f.jobs);
    if (!cal.converged) {
      spdlog::error("calibration failed: schedule exhausted");
      return 1;
    }
    threshold = cal.c;
  } else {
    throw jcl::ConfigError("lottery-strong needs 'C' or 'calibration'");
  }
  const auto partition = jcl::BuildPartition(c.nu);
  const auto s1 = jcl::MakeAdversary(c.device1, jcl::MechanismKind::kStrong, c.nu.outcomes());
  const auto s2 = jcl::MakeAdversary(c.device2, jcl::MechanismKind::kStrong, c.nu.outcomes());

  std::vector<jcl::StrongResult> results(c.runs);
  jcl::ParallelChunks(c.runs, f.jobs, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t r = begin; r < end; ++r) {
      jcl::RunStreams streams(c.seed, r);
      results[r] = jcl::RunStrong(c.coins, partition, threshold, s1, s2, streams,
                                  {.keep_snapshots = false});
    }
  });
  Output out(f.out);
  jcl::CsvWriter csv(out.stream(), {"run_id", "outcome", "stages", "z_value"});
  jcl::EmpiricalDistribution dist(c.nu.outcomes_ptr());
  for (std::size_t r = 0; r < c.runs; ++r) {
    const auto& res = results[r];
    dist.add(res.outcome);
    csv.row({std::to_string(r), c.nu.outcomes().label(res.outcome),
             std::to_string(res.stages), jcl::FormatDouble(res.z)});
  }
  jcl::Json report = jcl::DistributionReport(dist, c.nu, kDelta);
  report["C"] = threshold;
  if (!f.report.empty()) WriteJson(f.report, report);
  spdlog::info("lottery-strong: C={} linf={}", threshold, report["linf"].get<double>());
  if (!f.assert_gate) return 0;
  const double eps = RequireEps(c.epsilon);
  const double bound = eps + jcl::HoeffdingMargin(c.runs, c.nu.size(), kDelta);
  return Gate(f, jcl::LinfDistance(dist, c.nu) <= bound, "linf <= eps + margin");
}

std::size_t WeakBudget(const jcl::LotteryConfig& c) {
  return c.max_stages ? *c.max_stages
                      : jcl::HonestStageBudget(c.coins, c.nu.size(), kDelta);
}

std::vector<jcl::WeakResult> RunWeakBatch(const jcl::LotteryConfig& c,
                                          std::size_t max_stages, std::size_t jobs) {
  const auto s1 = jcl::MakeAdversary(c.device1, jcl::MechanismKind::kWeak, c.nu.outcomes());
  const auto s2 = jcl::MakeAdversary(c.device2, jcl::MechanismKind::kWeak, c.nu.outcomes());
  std::vector<jcl::WeakResult> results(c.runs);
  jcl::ParallelChunks(c.runs, jobs, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t r = begin; r < end; ++r) {
      jcl::RunStreams streams(c.seed, r);
      results[r] = jcl::RunWeak(c.coins, c.nu, s1, s2, streams, max_stages,
                                {.keep_beliefs = false, .window = c.window});
    }
  });
  return results;
}

int LotteryWeak(const Flags& f) {
  const jcl::LotteryConfig c = LoadLottery(f);
  const std::size_t max_stages = WeakBudget(c);
  const auto results = RunWeakBatch(c, max_stages, f.jobs);
  Output out(f.out);
  jcl::CsvWriter csv(out.stream(), {"run_id", "outcome_or_timeout", "stages", "verdict"});
  jcl::EmpiricalDistribution dist(c.nu.outcomes_ptr());
  for (std::size_t r = 0; r < c.runs; ++r) {
    const auto& res = results[r];
    if (res.outcome) {
      dist.add(*res.outcome);
    } else {
      dist.add_unassigned();
    }
    csv.row({std::to_string(r),
             res.outcome ? c.nu.outcomes().label(*res.outcome) : std::string("timeout"),
             std::to_string(res.stages), jcl::ToString(res.verdict.verdict)});
  }
  jcl::Json report = jcl::DistributionReport(dist, c.nu, kDelta);
  report["max_stages"] = max_stages;
  report["timeouts"] = dist.unassigned();
  if (!f.report.empty()) WriteJson(f.report, report);
  if (!f.assert_gate) return 0;
  const double margin = jcl::HoeffdingMargin(c.runs, c.nu.size(), kDelta);
  if (c.device1 == "honest" && c.device2 == "honest") {
    const double timeouts = static_cast<double>(dist.unassigned()) / c.runs;
    return Gate(f, jcl::LinfDistance(dist, c.nu) <= margin && timeouts <= kDelta,
                "honest linf <= margin and timeouts <= 1%");
  }
  const auto excess = jcl::OneSidedExcess(dist, c.nu);
  bool ok = true;
  for (double e : excess) ok = ok && e <= margin;
  return Gate(f, ok, "one-sided excess <= margin");
}

int Detect(const Flags& f) {
  jcl::LotteryConfig c = LoadLottery(f);
  const std::size_t max_stages = c.max_stages.value_or(10000);
  const auto results = RunWeakBatch(c, max_stages, f.jobs);
  std::array<std::uint64_t, 4> verdicts{};
  std::uint64_t timeouts = 0;
  for (const auto& res : results) {
    if (!res.outcome) {
      ++timeouts;
      ++verdicts[static_cast<int>(res.verdict.verdict)];
    }
  }
  jcl::Json summary;
  summary["runs"] = c.runs;
  summary["max_stages"] = max_stages;
  summary["device1"] = c.device1;
  summary["device2"] = c.device2;
  summary["timeouts"] = timeouts;
  summary["timeout_fraction"] = static_cast<double>(timeouts) / c.runs;
  jcl::Json v = jcl::Json::object();
  for (int k = 0; k < 4; ++k) {
    v[jcl::ToString(static_cast<jcl::Verdict>(k))] = verdicts[k];
  }
  summary["verdicts"] = v;
  WriteJson(f.out, summary);
  if (!f.assert_gate) return 0;
  const bool h1 = c.device1 == "honest";
  const bool h2 = c.device2 == "honest";
  const auto faulty1 = verdicts[static_cast<int>(jcl::Verdict::kDevice1Faulty)];
  const auto faulty2 = verdicts[static_cast<int>(jcl::Verdict::kDevice2Faulty)];
  if (h1 && h2) return Gate(f, faulty1 + faulty2 == 0, "no faulty verdict under honest play");
  if (h1 != h2) {
    const auto flagged = h1 ? faulty2 : faulty1;
    const bool ok = static_cast<double>(timeouts) >= 0.99 * c.runs && flagged == timeouts;
    return Gate(f, ok, ">= 99% timeouts, all attributed to the faulty device");
  }
  return Gate(f, true, "both devices faulty: nothing to check");
}

int CalibrateCommand(const Flags& f) {
  const jcl::LotteryConfig c = LoadLottery(f);
  double eps = 0.0;
  if (f.eps) {
    eps = *f.eps;
  } else if (c.calibration) {
    eps = c.calibration->epsilon;
  } else if (c.epsilon) {
    eps = *c.epsilon;
  } else {
    throw jcl::ConfigError("calibrate needs --eps, 'epsilon' or 'calibration'");
  }
  const auto result = Calibrate(c, eps, f.jobs);
  jcl::Json report = jcl::CalibrationReport(result);
  report["epsilon"] = eps;
  WriteJson(f.out, report);
  if (!result.converged) spdlog::warn("calibration schedule exhausted");
  return Gate(f, result.converged, "calibration converged");
}

jcl::Json PayoffJson(const std::vector<std::string>& players, const std::vector<double>& v) {
  jcl::Json j = jcl::Json::object();
  for (std::size_t i = 0; i < players.size(); ++i) j[players[i]] = v[i];
  return j;
}

int Game(const Flags& f) {
  const std::filesystem::path path(f.config);
  jcl::GameConfig c = jcl::ParseGameConfig(jcl::ReadJsonFile(path), path.parent_path());
  if (f.seed) c.seed = *f.seed;
  if (f.runs) c.runs = *f.runs;
  if (f.eps) c.epsilon = *f.eps;
  if (c.runs < 1) throw jcl::ConfigError("runs must be >= 1");
  if (f.mode != "payoff" && f.mode != "deviations") {
    throw jcl::ConfigError("--mode must be 'payoff' or 'deviations'");
  }
  c.block.calibration.jobs = f.jobs;
  const jcl::BlockProfile profile = jcl::BuildBlockProfile(
      c.game, c.sunspot, c.epsilon, jcl::SubSeed(c.seed, "block"), c.block);
  spdlog::info("block profile: T={} C={}", profile.horizon_blocks, profile.threshold);
  jcl::PlayOptions options;
  options.horizon_stages = c.horizon_stages;
  options.jobs = f.jobs;
  const auto& players = c.game->players();
  jcl::Json r;
  r["mode"] = f.mode;
  r["epsilon"] = c.epsilon;
  r["runs"] = c.runs;
  r["horizon_blocks"] = profile.horizon_blocks;
  r["threshold"] = profile.threshold;
  r["block_accuracy"] = profile.block_accuracy;
  const std::uint64_t play_seed = jcl::SubSeed(c.seed, "play");
  bool passed = true;
  if (f.mode == "payoff") {
    const auto est = jcl::EstimatePayoff(profile, std::nullopt, c.runs, play_seed, options);
    r["payoff"] = PayoffJson(players, est.mean);
    r["half_width"] = est.half_width;
    r["absorbed_fraction"] = est.absorbed_fraction;
    if (!c.sunspot.target_payoff.empty()) {
      const double d = jcl::LinfDistance(est.mean, c.sunspot.target_payoff);
      const double bound = 2.0 * c.epsilon + est.half_width;
      r["target_payoff"] = PayoffJson(players, c.sunspot.target_payoff);
      r["linf"] = d;
      r["bound"] = bound;
      passed = d <= bound;
    } else if (f.assert_gate) {
      throw jcl::ConfigError("--assert in payoff mode needs sunspot.target_payoff");
    }
  } else {
    jcl::Json reports = jcl::Json::array();
    const double bound_eps = c.gain_factor * c.epsilon;
    const auto all = jcl::DeviationGains(profile, jcl::AllDeviationFamilies(), c.runs,
                                         play_seed, options);
    for (std::size_t i = 0; i < players.size(); ++i) {
      const auto& rep = all[i];
      jcl::Json jr;
      jr["player"] = players[i];
      jr["on_path"] = rep.on_path;
      jr["max_gain"] = rep.max_gain;
      jr["argmax"] = rep.argmax;
      jr["ci"] = rep.ci;
      jr["bound"] = bound_eps + rep.ci;
      jcl::Json outcomes = jcl::Json::array();
      for (const auto& o : rep.outcomes) {
        outcomes.push_back({{"deviation", o.name}, {"payoff", o.payoff}, {"gain", o.gain}});
      }
      jr["deviations"] = outcomes;
      reports.push_back(jr);
      passed = passed && rep.max_gain <= bound_eps + rep.ci;
      spdlog::info("player {}: max gain {} ({})", players[i], rep.max_gain, rep.argmax);
    }
    r["players"] = reports;
  }
  r["pass"] = passed;
  WriteJson(f.out, r);
  return Gate(f, passed, f.mode == "payoff" ? "payoff within 2 eps + CI"
                                            : "deviation gain within bound + CI");
}

void ConfigureLogging() {
  auto logger = spdlog::stderr_color_mt("jcl");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("JCL_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace

int main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Jointly controlled lotteries with biased coins"};
  app.require_subcommand(1);
  Flags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Experiment config (JSON)")->required();
    sub->add_option("--seed", f.seed, "Root seed (overrides the config)");
    sub->add_option("--runs", f.runs, "Number of runs (overrides the config)");
    sub->add_option("--out", f.out, "Output file (default: stdout)");
    sub->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--assert", f.assert_gate, "Exit 3 when the acceptance gate fails");
    sub->add_option("--eps", f.eps, "Target accuracy epsilon");
    sub->add_option("--max-stages", f.max_stages, "Stage budget for weak runs");
  };
  auto* strong = app.add_subcommand("lottery-strong", "Run the bounded strong mechanism");
  auto* weak = app.add_subcommand("lottery-weak", "Run the unbounded weak mechanism");
  auto* detect = app.add_subcommand("detect", "Fault detection on timed-out weak runs");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the strong threshold C");
  auto* game = app.add_subcommand("game", "Block profile for a quitting game");
  for (auto* sub : {strong, weak, detect, calibrate, game}) add_common(sub);
  for (auto* sub : {strong, weak}) {
    sub->add_option("--report", f.report, "Distribution report (JSON)");
  }
  game->add_option("--mode", f.mode, "payoff or deviations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  try {
    if (*strong) return LotteryStrong(f);
    if (*weak) return LotteryWeak(f);
    if (*detect) return Detect(f);
    if (*calibrate) return CalibrateCommand(f);
    return Game(f);
  } catch (const jcl::InvalidArgument& e) {
    spdlog::error("config error: {}", e.what());
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
