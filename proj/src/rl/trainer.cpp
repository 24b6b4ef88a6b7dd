#include "dqgat/rl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "dqgat/nn/checkpoint.hpp"
#include "dqgat/obs/observation.hpp"

namespace dqgat::rl {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr int kMaxConsecutiveFailures = 100;

}  // namespace

std::vector<ScenarioChoice> parse_scenario_set(std::string_view text) {
  std::vector<ScenarioChoice> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw std::invalid_argument("empty entry in scenario set");
    if (item == "junctions") {
      for (auto id : sim::junction_scenarios()) {
        out.push_back({id, sim::Density::kRegular});
        out.push_back({id, sim::Density::kDense});
      }
    } else {
      const auto colon = item.find(':');
      ScenarioChoice c;
      c.scenario = sim::parse_scenario(item.substr(0, colon));
      if (colon != std::string_view::npos) c.density = sim::parse_density(item.substr(colon + 1));
      out.push_back(c);
    }
    pos = end + 1;
  }
  return out;
}

std::string to_string(const std::vector<ScenarioChoice>& set) {
  std::string out;
  for (const auto& c : set) {
    if (!out.empty()) out += ',';
    out += sim::to_string(c.scenario) + ":" + sim::to_string(c.density);
  }
  return out;
}

void TrainerConfig::validate() const {
  net.validate();
  learner.validate();
  per.validate();
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (batch > per.capacity) throw std::invalid_argument("batch exceeds replay capacity");
  if (collect_interval == 0) throw std::invalid_argument("collect interval must be positive");
  if (rounds_per_update == 0) throw std::invalid_argument("rounds per update must be positive");
  if (total_steps == 0) throw std::invalid_argument("total steps must be positive");
  if (workers == 0) throw std::invalid_argument("worker count must be at least 1");
  if (scenarios.empty()) throw std::invalid_argument("scenario set is empty");
  if (seed >= kEvalSeedFloor) throw std::invalid_argument("training seed must be below the evaluation seed range");
}

std::string TrainerConfig::to_json() const {
  json j;
  j["net"] = json::parse(net.to_json());
  j["gamma"] = learner.gamma;
  j["lr"] = learner.lr;
  j["grad_clip"] = learner.grad_clip;
  j["target_sync"] = learner.target_sync;
  j["priority_floor"] = learner.priority_floor;
  j["capacity"] = per.capacity;
  j["alpha"] = per.alpha;
  j["beta_start"] = per.beta_start;
  j["beta_end"] = per.beta_end;
  j["batch"] = batch;
  j["collect_interval"] = collect_interval;
  j["rounds_per_update"] = rounds_per_update;
  j["total_steps"] = total_steps;
  j["workers"] = workers;
  j["seed"] = seed;
  j["scenarios"] = to_string(scenarios);
  j["checkpoint_every"] = checkpoint_every;
  j["bootstrap_timeouts"] = bootstrap_timeouts;
  return j.dump();
}

TrainerConfig TrainerConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  static const std::vector<std::string> known{
      "net", "gamma", "lr", "grad_clip", "target_sync", "priority_floor", "capacity", "alpha", "beta_start",
      "beta_end", "batch", "collect_interval", "rounds_per_update", "total_steps", "workers", "seed", "scenarios",
      "checkpoint_every", "bootstrap_timeouts"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown trainer config key: " + key);
    }
  }
  TrainerConfig c;
  if (j.contains("net")) c.net = nn::QNetConfig::from_json(j["net"].dump());
  c.learner.gamma = j.value("gamma", c.learner.gamma);
  c.learner.lr = j.value("lr", c.learner.lr);
  c.learner.grad_clip = j.value("grad_clip", c.learner.grad_clip);
  c.learner.target_sync = j.value("target_sync", c.learner.target_sync);
  c.learner.priority_floor = j.value("priority_floor", c.learner.priority_floor);
  c.per.capacity = j.value("capacity", c.per.capacity);
  c.per.alpha = j.value("alpha", c.per.alpha);
  c.per.beta_start = j.value("beta_start", c.per.beta_start);
  c.per.beta_end = j.value("beta_end", c.per.beta_end);
  c.per.priority_floor = c.learner.priority_floor;
  c.batch = j.value("batch", c.batch);
  c.collect_interval = j.value("collect_interval", c.collect_interval);
  c.rounds_per_update = j.value("rounds_per_update", c.rounds_per_update);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.workers = j.value("workers", c.workers);
  c.seed = j.value("seed", c.seed);
  if (j.contains("scenarios")) c.scenarios = parse_scenario_set(j["scenarios"].get<std::string>());
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.bootstrap_timeouts = j.value("bootstrap_timeouts", c.bootstrap_timeouts);
  c.validate();
  return c;
}

std::uint64_t TrainerConfig::hash() const { return nn::fnv1a64(to_json()); }

std::string TrainLogRecord::to_json() const {
  json j;
  j["env_steps"] = env_steps;
  j["episodes"] = episodes;
  j["mean_reward_100"] = mean_reward_100;
  j["success_rate_100"] = success_rate_100;
  j["loss"] = loss;
  j["buffer_size"] = buffer_size;
  j["sync_count"] = sync_count;
  j["grad_steps"] = grad_steps;
  return j.dump();
}

TrainLogRecord TrainLogRecord::from_json(const std::string& line) {
  const json j = json::parse(line);
  TrainLogRecord r;
  r.env_steps = j.at("env_steps");
  r.episodes = j.at("episodes");
  r.mean_reward_100 = j.at("mean_reward_100");
  r.success_rate_100 = j.value("success_rate_100", 0.0);
  r.loss = j.at("loss");
  r.buffer_size = j.at("buffer_size");
  r.sync_count = j.at("sync_count");
  r.grad_steps = j.value("grad_steps", std::uint64_t{0});
  return r;
}

bool stored_terminal(const sim::Events& events, bool bootstrap_timeouts) {
  if (events.collision || events.success) return true;
  return !bootstrap_timeouts && events.terminal();
}

std::uint64_t training_episode_seed(std::uint64_t base, std::size_t worker, std::uint64_t episode) {
  const std::uint64_t h = splitmix64(splitmix64(base) ^ splitmix64((std::uint64_t{worker} << 40) ^ episode));
  return h % kEvalSeedFloor;
}

namespace {

class Worker {
 public:
  Worker(const TrainerConfig& cfg, std::size_t index, ReplayBuffer& buffer)
      : cfg_(cfg),
        index_(index),
        buffer_(buffer),
        obs_cfg_(obs::ObsConfig::for_network(cfg.net)),
        rng_(splitmix64(cfg.seed * 0x100000001b3ULL + index + 1)) {}

  void set_snapshot(std::shared_ptr<const nn::QNetwork<float>> snapshot) { snapshot_ = std::move(snapshot); }

  /// Runs `quota` env steps, pushing one transition per step.
  void collect(std::uint64_t quota) {
    std::uint64_t done = 0;
    int failures = 0;
    while (done < quota) {
      try {
        if (!world_) start_episode();
        ++fault_counter_;
        if (cfg_.fault_every > 0 && fault_counter_ % cfg_.fault_every == 0) {
          throw std::runtime_error("injected worker fault");
        }
        step_once();
        ++done;
        failures = 0;
      } catch (const std::exception& e) {
        ++restarts_;
        errors_.push_back("worker " + std::to_string(index_) + ": " + e.what());
        world_.reset();
        current_.reset();
        if (++failures >= kMaxConsecutiveFailures) throw;
      }
    }
  }

  std::uint64_t pushed() const { return pushed_; }
  std::uint64_t restarts() const { return restarts_; }
  std::vector<EpisodeSummary> take_finished() { return std::exchange(finished_, {}); }
  std::vector<std::string> take_errors() { return std::exchange(errors_, {}); }

 private:
  const TrainerConfig& cfg_;
  std::size_t index_;
  ReplayBuffer& buffer_;
  obs::ObsConfig obs_cfg_;
  nn::Rng rng_;
  std::shared_ptr<const nn::QNetwork<float>> snapshot_;
  std::optional<sim::World> world_;
  std::shared_ptr<const obs::Observation> current_;
  EpisodeSummary episode_;
  std::uint64_t episode_index_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t restarts_ = 0;
  std::uint64_t fault_counter_ = 0;
  std::vector<EpisodeSummary> finished_;
  std::vector<std::string> errors_;

  void start_episode() {
    std::uniform_int_distribution<std::size_t> pick(0, cfg_.scenarios.size() - 1);
    const ScenarioChoice choice = cfg_.scenarios[pick(rng_)];
    const std::uint64_t seed = training_episode_seed(cfg_.seed, index_, episode_index_++);
    world_.emplace(sim::spawn_scenario(sim::ScenarioConfig::make(choice.scenario, choice.density, seed)));
    current_ = std::make_shared<const obs::Observation>(obs::observe(*world_, obs_cfg_));
    episode_ = EpisodeSummary{index_, seed, choice, 0.0, 0, {}};
  }

  void step_once() {
    const auto input = obs::make_input(*current_, cfg_.net);
    const auto out = snapshot_->forward(input, nn::Mode::kTrain, &rng_);
    const std::size_t action = nn::argmax_lowest(out.q.data());
    const auto outcome = world_->step(action);
    auto next = std::make_shared<const obs::Observation>(obs::observe(*world_, obs_cfg_));
    Transition t{current_, static_cast<std::uint8_t>(action), static_cast<float>(outcome.reward), next,
                 stored_terminal(outcome.events, cfg_.bootstrap_timeouts)};
    buffer_.push(std::move(t));
    ++pushed_;
    episode_.episode_return += outcome.reward;
    episode_.steps = world_->step_count();
    if (outcome.events.terminal()) {
      episode_.events = outcome.events;
      finished_.push_back(episode_);
      world_.reset();
      current_.reset();
    } else {
      current_ = std::move(next);
    }
  }
};

}  // namespace

TrainingResult run_async_training(const TrainerConfig& cfg, const std::filesystem::path& out_dir,
                                  const TrainerHooks& hooks) {
  cfg.validate();
  PerConfig per = cfg.per;
  per.priority_floor = cfg.learner.priority_floor;
  ReplayBuffer buffer(per);
  TrainingResult result;
  result.learner = std::make_unique<Learner>(cfg.net, cfg.learner, cfg.seed);
  Learner& learner = *result.learner;
  std::mt19937_64 sample_rng(splitmix64(cfg.seed ^ 0xb0ffe7ULL));

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "config.json") << cfg.to_json() << "\n";
    log_file.open(out_dir / "train_log.jsonl");
    if (!log_file) throw std::runtime_error("cannot write " + (out_dir / "train_log.jsonl").string());
  }

  std::vector<std::unique_ptr<Worker>> workers;
  for (std::size_t w = 0; w < cfg.workers; ++w) workers.push_back(std::make_unique<Worker>(cfg, w, buffer));
  auto refresh = [&] {
    auto snapshot = std::make_shared<const nn::QNetwork<float>>(learner.online().clone());
    for (auto& w : workers) w->set_snapshot(snapshot);
  };
  refresh();

  std::deque<double> recent_returns;
  std::deque<int> recent_success;
  std::uint64_t bursts = 0;
  while (result.env_steps < cfg.total_steps) {
    const std::uint64_t pooled = std::min(cfg.collect_interval, cfg.total_steps - result.env_steps);
    std::vector<std::uint64_t> quota(cfg.workers, pooled / cfg.workers);
    for (std::size_t w = 0; w < pooled % cfg.workers; ++w) ++quota[w];

    if (cfg.workers == 1) {
      workers[0]->collect(quota[0]);
    } else {
      std::vector<std::exception_ptr> failures(cfg.workers);
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < cfg.workers; ++w) {
        threads.emplace_back([&, w] {
          try {
            workers[w]->collect(quota[w]);
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& f : failures) {
        if (f) std::rethrow_exception(f);
      }
    }
    result.env_steps += pooled;

    for (auto& w : workers) {
      for (auto& e : w->take_errors()) {
        if (hooks.on_error) hooks.on_error(e);
      }
      for (auto& ep : w->take_finished()) {
        recent_returns.push_back(ep.episode_return);
        recent_success.push_back(ep.events.success ? 1 : 0);
        if (recent_returns.size() > 100) {
          recent_returns.pop_front();
          recent_success.pop_front();
        }
        result.episodes.push_back(std::move(ep));
      }
    }

    double loss_sum = 0.0;
    std::uint64_t rounds = 0;
    if (buffer.size() >= cfg.batch) {
      const double beta = per.beta(static_cast<double>(result.env_steps) / static_cast<double>(cfg.total_steps));
      for (std::uint64_t r = 0; r < cfg.rounds_per_update; ++r) {
        const auto batch = buffer.sample(cfg.batch, beta, sample_rng);
        loss_sum += learner.update(buffer, batch).loss;
        ++rounds;
      }
      refresh();
    }
    ++bursts;

    TrainLogRecord rec;
    rec.env_steps = result.env_steps;
    rec.episodes = result.episodes.size();
    if (!recent_returns.empty()) {
      rec.mean_reward_100 = std::accumulate(recent_returns.begin(), recent_returns.end(), 0.0) /
                            static_cast<double>(recent_returns.size());
      rec.success_rate_100 = std::accumulate(recent_success.begin(), recent_success.end(), 0.0) /
                             static_cast<double>(recent_success.size());
    }
    rec.loss = rounds > 0 ? loss_sum / static_cast<double>(rounds) : 0.0;
    rec.buffer_size = buffer.size();
    rec.sync_count = learner.sync_count();
    rec.grad_steps = learner.grad_steps();
    result.log.push_back(rec);
    if (log_file) log_file << rec.to_json() << "\n" << std::flush;
    if (hooks.on_log) hooks.on_log(rec);
    if (hooks.on_update) hooks.on_update(learner, rec);

    if (!out_dir.empty() && cfg.checkpoint_every > 0 && bursts % cfg.checkpoint_every == 0) {
      nn::save_checkpoint(out_dir / ("checkpoint_" + std::to_string(result.env_steps) + ".ckpt"), learner.online(),
                          &learner.target(), learner.grad_steps());
    }
  }

  if (!out_dir.empty()) {
    nn::save_checkpoint(out_dir / "final.ckpt", learner.online(), &learner.target(), learner.grad_steps());
  }
  for (const auto& w : workers) {
    result.worker_pushed.push_back(w->pushed());
    result.worker_restarts += w->restarts();
  }
  result.buffer_pushed = buffer.pushed();
  return result;
}

}  // namespace dqgat::rl
