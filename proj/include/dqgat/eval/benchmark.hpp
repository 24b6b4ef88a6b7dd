#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dqgat/agents/policy.hpp"
#include "dqgat/sim/replay.hpp"

namespace dqgat::eval {

enum class Outcome { kSuccess, kCollision, kJam, kTimeout };
std::string to_string(Outcome o);
Outcome parse_outcome(std::string_view name);
Outcome outcome_of(const sim::Events& events);

/// One evaluated episode; jam recounts of a trial share its trial index.
struct TrialRecord {
  sim::ScenarioId scenario = sim::ScenarioId::kTMerge;
  sim::Density density = sim::Density::kRegular;
  std::string agent;
  int trial = 0;
  int attempt = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::kTimeout;
  int steps = 0;
  double completion_time = 0.0;  // steps * dt
  double episode_return = 0.0;

  std::string to_json() const;
  static TrialRecord from_json(const std::string& line);
  bool operator==(const TrialRecord&) const = default;
};

/// Metrics per (scenario, density, agent), computed from the final attempt of every trial.
struct CellReport {
  sim::ScenarioId scenario = sim::ScenarioId::kTMerge;
  sim::Density density = sim::Density::kRegular;
  std::string agent;
  int trials = 0;
  int successes = 0;
  int collisions = 0;
  int jams = 0;          // trials still jammed after the recount limit
  int timeouts = 0;
  int jam_recounts = 0;  // extra episodes run because of jams
  double success_rate = 0.0;          // percent
  std::optional<double> ct_mean;      // seconds, successful trials only
  std::optional<double> ct_std;
  std::vector<std::uint64_t> seeds;   // seed of each trial's final attempt

  std::string to_json() const;
  bool operator==(const CellReport&) const = default;
};

struct BenchmarkReport {
  std::string agent;
  std::string config_hash;
  std::string checkpoint_hash;
  std::vector<CellReport> cells;
  std::vector<TrialRecord> records;  // every attempt, sorted

  const CellReport* find(sim::ScenarioId scenario, sim::Density density) const;
  std::string table() const;
  /// Line-delimited records: a meta line, one line per cell, one per attempt.
  std::string to_jsonl() const;
  static BenchmarkReport from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

struct BenchmarkConfig {
  std::string agent = "fsm_ttc";
  std::optional<std::filesystem::path> checkpoint;
  std::vector<sim::ScenarioId> scenarios{sim::ScenarioId::kTMerge};
  std::vector<sim::Density> densities{sim::Density::kRegular};
  int trials = 100;
  std::uint64_t seed_base = 1'000'000'000ULL;
  int max_recounts = 5;
  std::optional<std::filesystem::path> replay_dir;
  std::size_t threads = 1;
  std::optional<int> vehicle_count;  // overrides the scenario's background vehicle count

  void validate() const;
  sim::ScenarioConfig scenario_config(sim::ScenarioId scenario, sim::Density density, std::uint64_t seed) const;
  std::string to_json() const;
  /// Seed of a trial's n-th attempt; recounts draw from a block after the trial seeds.
  std::uint64_t seed_for(int trial, int attempt) const;
};

using PolicyFactory = std::function<std::unique_ptr<agents::Policy>()>;

struct EpisodeResult {
  sim::Events events;
  int steps = 0;
  double episode_return = 0.0;
};

/// Runs one episode to termination, optionally logging it.
EpisodeResult run_episode(agents::Policy& policy, const sim::ScenarioConfig& config, std::uint64_t episode_seed,
                          sim::ReplayWriter* log = nullptr);

/// Builds agents with make_policy(cfg.agent, cfg.checkpoint).
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const PolicyFactory& factory,
                              const std::string& checkpoint_hash = "");

/// Cell metrics from attempt records; independent of how the records were produced.
BenchmarkReport summarize(std::vector<TrialRecord> records, const std::string& agent, const std::string& config_hash,
                          const std::string& checkpoint_hash);

/// Seeds for checkpoint selection, far above the evaluation block.
inline constexpr std::uint64_t kValidationSeedBase = 5'000'000'000ULL;

struct CheckpointScore {
  std::filesystem::path checkpoint;
  int trials = 0;
  int successes = 0;
  int collisions = 0;
  std::optional<double> ct_mean;  // over all successful trials
};

/// Benchmarks every .ckpt file in `dir` as the dqgat agent under `cfg` and returns the scores best first: more
/// successes, then fewer collisions, then shorter mean C.T., then path order.
std::vector<CheckpointScore> rank_checkpoints(const std::filesystem::path& dir, BenchmarkConfig cfg);

TrialRecord trial_from_replay(const sim::Replay& replay);
/// Recomputes a report from a directory of benchmark episode logs.
BenchmarkReport report_from_replays(const std::filesystem::path& dir, const std::string& config_hash = "");

}  // namespace dqgat::eval
