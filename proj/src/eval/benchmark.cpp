#include "dqgat/eval/benchmark.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "dqgat/agents/dqgat.hpp"
#include "dqgat/nn/checkpoint.hpp"
#include "dqgat/rl/trainer.hpp"

namespace dqgat::eval {

using nlohmann::json;

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kJam: return "jam";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

Outcome parse_outcome(std::string_view name) {
  if (name == "success") return Outcome::kSuccess;
  if (name == "collision") return Outcome::kCollision;
  if (name == "jam") return Outcome::kJam;
  if (name == "timeout") return Outcome::kTimeout;
  throw std::invalid_argument("unknown outcome: " + std::string(name));
}

Outcome outcome_of(const sim::Events& e) {
  if (e.collision) return Outcome::kCollision;
  if (e.success) return Outcome::kSuccess;
  if (e.jam_timeout) return Outcome::kJam;
  if (e.step_timeout) return Outcome::kTimeout;
  throw std::invalid_argument("episode did not terminate");
}

std::string TrialRecord::to_json() const {
  json j{{"type", "trial"},
         {"scenario", sim::to_string(scenario)},
         {"density", sim::to_string(density)},
         {"agent", agent},
         {"trial", trial},
         {"attempt", attempt},
         {"seed", seed},
         {"outcome", eval::to_string(outcome)},
         {"steps", steps},
         {"completion_time", completion_time},
         {"episode_return", episode_return}};
  return j.dump();
}

TrialRecord TrialRecord::from_json(const std::string& line) {
  const json j = json::parse(line);
  TrialRecord r;
  r.scenario = sim::parse_scenario(j.at("scenario").get<std::string>());
  r.density = sim::parse_density(j.at("density").get<std::string>());
  r.agent = j.at("agent");
  r.trial = j.at("trial");
  r.attempt = j.at("attempt");
  r.seed = j.at("seed");
  r.outcome = parse_outcome(j.at("outcome").get<std::string>());
  r.steps = j.at("steps");
  r.completion_time = j.at("completion_time");
  r.episode_return = j.at("episode_return");
  return r;
}

std::string CellReport::to_json() const {
  json j{{"type", "cell"},
         {"scenario", sim::to_string(scenario)},
         {"density", sim::to_string(density)},
         {"agent", agent},
         {"trials", trials},
         {"successes", successes},
         {"collisions", collisions},
         {"jams", jams},
         {"timeouts", timeouts},
         {"jam_recounts", jam_recounts},
         {"success_rate", success_rate},
         {"ct_mean", ct_mean ? json(*ct_mean) : json(nullptr)},
         {"ct_std", ct_std ? json(*ct_std) : json(nullptr)},
         {"seeds", seeds}};
  return j.dump();
}

const CellReport* BenchmarkReport::find(sim::ScenarioId scenario, sim::Density density) const {
  for (const auto& c : cells) {
    if (c.scenario == scenario && c.density == density) return &c;
  }
  return nullptr;
}

std::string BenchmarkReport::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-8s %-14s %6s %7s %16s %5s %5s %5s %8s\n", "scenario", "density", "agent",
                "trials", "S.R.%", "C.T. (s)", "col", "jam", "tout", "recounts");
  out << line;
  for (const auto& c : cells) {
    char ct[32] = "-";
    if (c.ct_mean) std::snprintf(ct, sizeof ct, "%.2f +- %.2f", *c.ct_mean, c.ct_std.value_or(0.0));
    std::snprintf(line, sizeof line, "%-12s %-8s %-14s %6d %7.1f %16s %5d %5d %5d %8d\n",
                  sim::to_string(c.scenario).c_str(), sim::to_string(c.density).c_str(), c.agent.c_str(), c.trials,
                  c.success_rate, ct, c.collisions, c.jams, c.timeouts, c.jam_recounts);
    out << line;
  }
  return out.str();
}

std::string BenchmarkReport::to_jsonl() const {
  std::ostringstream out;
  out << json{{"type", "meta"}, {"agent", agent}, {"config_hash", config_hash}, {"checkpoint_hash", checkpoint_hash}}
             .dump()
      << "\n";
  for (const auto& c : cells) out << c.to_json() << "\n";
  for (const auto& r : records) out << r.to_json() << "\n";
  return out.str();
}

BenchmarkReport BenchmarkReport::from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<TrialRecord> records;
  std::string agent, config_hash, checkpoint_hash;
  bool have_meta = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type");
    if (type == "meta") {
      agent = j.at("agent");
      config_hash = j.at("config_hash");
      checkpoint_hash = j.at("checkpoint_hash");
      have_meta = true;
    } else if (type == "trial") {
      records.push_back(TrialRecord::from_json(line));
    }
  }
  if (!have_meta) throw std::runtime_error("report has no meta line");
  return summarize(std::move(records), agent, config_hash, checkpoint_hash);
}

void BenchmarkReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << to_jsonl();
}

void BenchmarkConfig::validate() const {
  if (trials <= 0) throw std::invalid_argument("trials must be positive");
  if (max_recounts < 0) throw std::invalid_argument("max recounts must be >= 0");
  if (scenarios.empty() || densities.empty()) throw std::invalid_argument("no scenarios or densities to evaluate");
  if (threads == 0) throw std::invalid_argument("threads must be at least 1");
  if (vehicle_count && *vehicle_count < 0) throw std::invalid_argument("vehicle count must be >= 0");
  if (seed_base < rl::kEvalSeedFloor) {
    throw std::invalid_argument("evaluation seeds must start at or above " + std::to_string(rl::kEvalSeedFloor) +
                                " to stay disjoint from training seeds");
  }
}

std::string BenchmarkConfig::to_json() const {
  std::vector<std::string> sc, de;
  for (auto s : scenarios) sc.push_back(sim::to_string(s));
  for (auto d : densities) de.push_back(sim::to_string(d));
  return json{{"agent", agent},
              {"scenarios", sc},
              {"densities", de},
              {"trials", trials},
              {"seed_base", seed_base},
              {"max_recounts", max_recounts},
              {"vehicle_count", vehicle_count ? nlohmann::json(*vehicle_count) : nlohmann::json(nullptr)}}
      .dump();
}

sim::ScenarioConfig BenchmarkConfig::scenario_config(sim::ScenarioId scenario, sim::Density density,
                                                    std::uint64_t seed) const {
  auto sc = sim::ScenarioConfig::make(scenario, density, seed);
  if (vehicle_count) {
    sc.vehicle_count_min = *vehicle_count;
    sc.vehicle_count_max = *vehicle_count;
  }
  return sc;
}

std::uint64_t BenchmarkConfig::seed_for(int trial, int attempt) const {
  if (attempt == 0) return seed_base + static_cast<std::uint64_t>(trial);
  return seed_base + static_cast<std::uint64_t>(trials) +
         static_cast<std::uint64_t>(trial) * static_cast<std::uint64_t>(std::max(max_recounts, 1)) +
         static_cast<std::uint64_t>(attempt - 1);
}

EpisodeResult run_episode(agents::Policy& policy, const sim::ScenarioConfig& config, std::uint64_t episode_seed,
                          sim::ReplayWriter* log) {
  auto world = sim::spawn_scenario(config);
  policy.reset(world, episode_seed);
  if (log) log->write_initial(world);
  EpisodeResult r;
  while (!world.terminal()) {
    const std::size_t a = policy.act(world);
    const auto outcome = world.step(a);
    if (log) log->write_step(outcome, a);
    r.episode_return += outcome.reward;
  }
  if (log) log->flush();
  r.events = world.last_events();
  r.steps = world.step_count();
  return r;
}

namespace {

std::string replay_name(sim::ScenarioId s, sim::Density d, int trial, int attempt) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_%s_t%04d_a%d.jsonl", sim::to_string(s).c_str(), sim::to_string(d).c_str(), trial,
                attempt);
  return buf;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  std::string ckpt_hash;
  if (cfg.checkpoint) ckpt_hash = nn::hex64(nn::file_hash(*cfg.checkpoint));
  if (cfg.agent == "dqgat") {
    if (!cfg.checkpoint) throw std::invalid_argument("agent dqgat needs a checkpoint");
    auto net = std::make_shared<const nn::QNetwork<float>>(
        nn::network_from_checkpoint(nn::load_checkpoint(*cfg.checkpoint)));
    return run_benchmark(cfg, [net] { return std::make_unique<agents::DqgatPolicy>(net); }, ckpt_hash);
  }
  agents::make_policy(cfg.agent, cfg.checkpoint);  // validates the name up front
  return run_benchmark(cfg, [&] { return agents::make_policy(cfg.agent, cfg.checkpoint); }, ckpt_hash);
}

std::vector<CheckpointScore> rank_checkpoints(const std::filesystem::path& dir, BenchmarkConfig cfg) {
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ckpt") paths.push_back(entry.path());
  }
  if (paths.empty()) throw std::runtime_error("no checkpoints in " + dir.string());
  std::vector<CheckpointScore> scores;
  for (const auto& path : paths) {
    cfg.agent = "dqgat";
    cfg.checkpoint = path;
    CheckpointScore s;
    s.checkpoint = path;
    double ct_sum = 0.0;
    for (const auto& cell : run_benchmark(cfg).cells) {
      s.trials += cell.trials;
      s.successes += cell.successes;
      s.collisions += cell.collisions;
      if (cell.ct_mean) ct_sum += *cell.ct_mean * cell.successes;
    }
    if (s.successes > 0) s.ct_mean = ct_sum / s.successes;
    scores.push_back(std::move(s));
  }
  std::sort(scores.begin(), scores.end(), [](const CheckpointScore& a, const CheckpointScore& b) {
    const double ct_a = a.ct_mean.value_or(INFINITY), ct_b = b.ct_mean.value_or(INFINITY);
    return std::tie(b.successes, a.collisions, ct_a, a.checkpoint) <
           std::tie(a.successes, b.collisions, ct_b, b.checkpoint);
  });
  return scores;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const PolicyFactory& factory,
                              const std::string& checkpoint_hash) {
  cfg.validate();
  if (cfg.replay_dir) std::filesystem::create_directories(*cfg.replay_dir);
  struct Task {
    sim::ScenarioId scenario;
    sim::Density density;
    int trial;
  };
  std::vector<Task> tasks;
  for (auto s : cfg.scenarios) {
    for (auto d : cfg.densities) {
      for (int t = 0; t < cfg.trials; ++t) tasks.push_back({s, d, t});
    }
  }
  const std::string agent_name = factory()->name();
  std::vector<std::vector<TrialRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;

  auto work = [&] {
    auto policy = factory();
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const auto& task = tasks[i];
        for (int attempt = 0; attempt <= cfg.max_recounts; ++attempt) {
          const std::uint64_t seed = cfg.seed_for(task.trial, attempt);
          if (seed < rl::kEvalSeedFloor) throw std::logic_error("evaluation seed inside the training range");
          const auto sc = cfg.scenario_config(task.scenario, task.density, seed);
          std::optional<sim::ReplayWriter> writer;
          if (cfg.replay_dir) {
            sim::ReplayHeader header{sc, agent_name, checkpoint_hash, task.trial, attempt};
            writer.emplace(*cfg.replay_dir / replay_name(task.scenario, task.density, task.trial, attempt), header);
          }
          const auto ep = run_episode(*policy, sc, seed, writer ? &*writer : nullptr);
          TrialRecord rec{task.scenario, task.density, agent_name, task.trial, attempt, seed,
                          outcome_of(ep.events), ep.steps, ep.steps * sim::kDt, ep.episode_return};
          results[i].push_back(rec);
          if (rec.outcome != Outcome::kJam) break;
        }
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = tasks.size();
      }
    }
  };
  if (cfg.threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < cfg.threads; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<TrialRecord> records;
  for (auto& r : results) records.insert(records.end(), r.begin(), r.end());
  return summarize(std::move(records), agent_name, nn::hex64(nn::fnv1a64(cfg.to_json())), checkpoint_hash);
}

BenchmarkReport summarize(std::vector<TrialRecord> records, const std::string& agent, const std::string& config_hash,
                          const std::string& checkpoint_hash) {
  auto key = [](const TrialRecord& r) {
    return std::make_tuple(static_cast<int>(r.scenario), static_cast<int>(r.density), r.agent, r.trial, r.attempt);
  };
  std::sort(records.begin(), records.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  BenchmarkReport report;
  report.agent = agent;
  report.config_hash = config_hash;
  report.checkpoint_hash = checkpoint_hash;

  std::map<std::tuple<int, int, std::string>, CellReport> cells;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto& c = cells[{static_cast<int>(r.scenario), static_cast<int>(r.density), r.agent}];
    c.scenario = r.scenario;
    c.density = r.density;
    c.agent = r.agent;
    const bool final_attempt = i + 1 == records.size() || records[i + 1].trial != r.trial ||
                               records[i + 1].scenario != r.scenario || records[i + 1].density != r.density ||
                               records[i + 1].agent != r.agent;
    if (!final_attempt) {
      ++c.jam_recounts;
      continue;
    }
    ++c.trials;
    c.seeds.push_back(r.seed);
    switch (r.outcome) {
      case Outcome::kSuccess: ++c.successes; break;
      case Outcome::kCollision: ++c.collisions; break;
      case Outcome::kJam: ++c.jams; break;
      case Outcome::kTimeout: ++c.timeouts; break;
    }
  }
  for (auto& [k, c] : cells) {
    c.success_rate = c.trials > 0 ? 100.0 * c.successes / c.trials : 0.0;
    std::vector<double> times;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.scenario != c.scenario || r.density != c.density || r.agent != c.agent) continue;
      if (r.outcome == Outcome::kSuccess) times.push_back(r.completion_time);
    }
    if (!times.empty()) {
      double sum = 0.0;
      for (double t : times) sum += t;
      const double mean = sum / static_cast<double>(times.size());
      double ss = 0.0;
      for (double t : times) ss += (t - mean) * (t - mean);
      c.ct_mean = mean;
      c.ct_std = times.size() > 1 ? std::sqrt(ss / static_cast<double>(times.size() - 1)) : 0.0;
    }
    report.cells.push_back(c);
  }
  report.records = std::move(records);
  return report;
}

TrialRecord trial_from_replay(const sim::Replay& replay) {
  const auto frames = replay.frames();
  if (frames.empty()) throw std::runtime_error("empty episode log");
  TrialRecord r;
  r.scenario = replay.header.config.scenario;
  r.density = replay.header.config.density;
  r.agent = replay.header.policy;
  r.trial = replay.header.trial;
  r.attempt = replay.header.attempt;
  r.seed = replay.header.config.seed;
  r.outcome = outcome_of(frames.back().events);
  r.steps = frames.back().t;
  r.completion_time = r.steps * sim::kDt;
  for (std::size_t i = 1; i < frames.size(); ++i) r.episode_return += frames[i].reward;
  return r;
}

BenchmarkReport report_from_replays(const std::filesystem::path& dir, const std::string& config_hash) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialRecord> records;
  std::string agent, ckpt;
  for (const auto& f : files) {
    const auto replay = sim::read_replay(f);
    if (replay.header.trial < 0) continue;
    records.push_back(trial_from_replay(replay));
    agent = replay.header.policy;
    ckpt = replay.header.checkpoint_hash;
  }
  return summarize(std::move(records), agent, config_hash, ckpt);
}

}  // namespace dqgat::eval
