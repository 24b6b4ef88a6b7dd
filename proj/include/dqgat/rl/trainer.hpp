#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dqgat/rl/learner.hpp"
#include "dqgat/sim/world.hpp"

namespace dqgat::rl {

/// Training episode seeds stay below this; evaluation seeds start at it.
inline constexpr std::uint64_t kEvalSeedFloor = 1'000'000'000ULL;

struct ScenarioChoice {
  sim::ScenarioId scenario = sim::ScenarioId::kTMerge;
  sim::Density density = sim::Density::kRegular;
  bool operator==(const ScenarioChoice&) const = default;
};

/// "t_merge:regular,int_left" (density defaults to regular); "junctions" expands to all six junctions in both densities.
std::vector<ScenarioChoice> parse_scenario_set(std::string_view text);
std::string to_string(const std::vector<ScenarioChoice>& set);

struct TrainerConfig {
  nn::QNetConfig net = nn::QNetConfig::desk();
  LearnerConfig learner;
  PerConfig per;
  std::size_t batch = 128;
  std::uint64_t collect_interval = 4000;  // pooled env steps between update bursts
  std::uint64_t rounds_per_update = 300;
  std::uint64_t total_steps = 300000;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::vector<ScenarioChoice> scenarios{{sim::ScenarioId::kTMerge, sim::Density::kRegular}};
  std::uint64_t checkpoint_every = 0;  // bursts; 0 = final checkpoint only
  std::uint64_t fault_every = 0;       // test hook: a worker throws before every k-th of its env steps
  bool bootstrap_timeouts = false;     // when set, jam and step timeouts keep the bootstrap term

  void validate() const;
  std::string to_json() const;
  static TrainerConfig from_json(const std::string& text);
  std::uint64_t hash() const;
};

struct TrainLogRecord {
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  double mean_reward_100 = 0.0;
  double success_rate_100 = 0.0;
  double loss = 0.0;
  std::uint64_t buffer_size = 0;
  std::uint64_t sync_count = 0;
  std::uint64_t grad_steps = 0;

  std::string to_json() const;
  static TrainLogRecord from_json(const std::string& line);
  bool operator==(const TrainLogRecord&) const = default;
};

struct EpisodeSummary {
  std::size_t worker = 0;
  std::uint64_t seed = 0;
  ScenarioChoice scenario;
  double episode_return = 0.0;
  int steps = 0;
  sim::Events events;
};

struct TrainingResult {
  std::unique_ptr<Learner> learner;
  std::vector<TrainLogRecord> log;
  std::vector<EpisodeSummary> episodes;
  std::vector<std::uint64_t> worker_pushed;  // transitions each worker counted
  std::uint64_t buffer_pushed = 0;           // transitions the buffer received
  std::uint64_t worker_restarts = 0;
  std::uint64_t env_steps = 0;
};

struct TrainerHooks {
  std::function<void(const TrainLogRecord&)> on_log;
  std::function<void(const std::string&)> on_error;
  /// Called after every update burst, on the learner thread.
  std::function<void(const Learner&, const TrainLogRecord&)> on_update;
};

/// Whether a step's transition is stored with terminal = true (no bootstrap).
bool stored_terminal(const sim::Events& events, bool bootstrap_timeouts);

/// Seed of a worker's n-th training episode, always below kEvalSeedFloor.
std::uint64_t training_episode_seed(std::uint64_t base, std::size_t worker, std::uint64_t episode);

/// Actor/learner loop: workers collect `collect_interval` pooled steps in parallel with
/// noisy exploration, then the learner runs `rounds_per_update` gradient steps and refreshes
/// worker snapshots. With `out_dir` set, writes train_log.jsonl, config.json and checkpoints.
TrainingResult run_async_training(const TrainerConfig& cfg, const std::filesystem::path& out_dir = {},
                                  const TrainerHooks& hooks = {});

}  // namespace dqgat::rl
