#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dqgat/eval/benchmark.hpp"
#include "dqgat/eval/introspect.hpp"
#include "dqgat/eval/render.hpp"
#include "dqgat/nn/checkpoint.hpp"
#include "dqgat/rl/trainer.hpp"

using namespace dqgat;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct TrainArgs {
  std::string scenario_set;
  std::size_t workers = 0;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  rl::TrainerConfig cfg;
  if (!a.config.empty()) cfg = rl::TrainerConfig::from_json(read_file(a.config));
  if (!a.scenario_set.empty()) cfg.scenarios = rl::parse_scenario_set(a.scenario_set);
  if (a.workers > 0) cfg.workers = a.workers;
  if (a.steps > 0) cfg.total_steps = a.steps;
  if (a.seed_set) cfg.seed = a.seed;
  cfg.validate();
  rl::TrainerHooks hooks;
  hooks.on_error = [](const std::string& e) { std::cerr << "worker error: " << e << "\n"; };
  if (!a.quiet) hooks.on_log = [](const rl::TrainLogRecord& r) { std::cout << r.to_json() << std::endl; };
  const auto result = rl::run_async_training(cfg, a.out, hooks);
  std::cout << "trained " << result.env_steps << " env steps, " << result.learner->grad_steps()
            << " gradient steps; checkpoint " << (std::filesystem::path(a.out) / "final.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string agent = "fsm_ttc";
  std::string scenarios = "t_merge";
  std::string density = "regular";
  int trials = 100;
  std::uint64_t seed_base = rl::kEvalSeedFloor;
  std::string report;
  std::string replay_dir;
  std::size_t threads = 1;
};

std::vector<sim::ScenarioId> parse_scenarios(const EvalArgs& a) {
  std::vector<sim::ScenarioId> out;
  for (const auto& s : split(a.scenarios)) {
    if (s == "junctions") {
      for (auto id : sim::junction_scenarios()) out.push_back(id);
    } else {
      out.push_back(sim::parse_scenario(s));
    }
  }
  return out;
}

std::vector<sim::Density> parse_densities(const EvalArgs& a) {
  if (a.density == "both") return {sim::Density::kRegular, sim::Density::kDense};
  std::vector<sim::Density> out;
  for (const auto& d : split(a.density)) out.push_back(sim::parse_density(d));
  return out;
}

int run_eval(const EvalArgs& a) {
  eval::BenchmarkConfig cfg;
  cfg.agent = a.agent;
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  cfg.scenarios = parse_scenarios(a);
  cfg.densities = parse_densities(a);
  cfg.trials = a.trials;
  cfg.seed_base = a.seed_base;
  cfg.threads = a.threads;
  if (!a.replay_dir.empty()) cfg.replay_dir = a.replay_dir;
  const auto report = eval::run_benchmark(cfg);
  std::cout << report.table();
  if (!a.report.empty()) {
    report.save(a.report);
    std::ofstream(std::filesystem::path(a.report).string() + ".txt") << report.table();
  }
  return 0;
}

struct SelectArgs {
  std::string run;
  std::string scenarios = "t_merge";
  std::string density = "regular";
  int trials = 100;
  std::uint64_t seed_base = eval::kValidationSeedBase;
  int max_recounts = 0;
  std::size_t threads = 1;
};

int run_select(const SelectArgs& a) {
  EvalArgs ea;
  ea.scenarios = a.scenarios;
  ea.density = a.density;
  eval::BenchmarkConfig cfg;
  cfg.scenarios = parse_scenarios(ea);
  cfg.densities = parse_densities(ea);
  cfg.trials = a.trials;
  cfg.seed_base = a.seed_base;
  cfg.max_recounts = a.max_recounts;
  cfg.threads = a.threads;
  const auto ranked = eval::rank_checkpoints(a.run, cfg);
  for (const auto& s : ranked) {
    std::printf("%-28s %4d/%d successes %4d collisions  C.T. %s\n", s.checkpoint.filename().c_str(), s.successes,
                s.trials, s.collisions, s.ct_mean ? std::to_string(*s.ct_mean).c_str() : "-");
  }
  std::cout << "best " << ranked.front().checkpoint.string() << "\n";
  return 0;
}

struct ReplayArgs {
  std::string log;
  std::string out_dir;
  std::string saliency;
  double scale = 4.0;
};

int run_replay(const ReplayArgs& a) {
  const auto replay = sim::read_replay(a.log);
  eval::RenderOptions opts;
  opts.pixels_per_metre = a.scale;
  std::optional<nn::QNetwork<float>> net;
  if (!a.saliency.empty()) {
    net.emplace(nn::network_from_checkpoint(nn::load_checkpoint(a.saliency)));
    opts.saliency_net = &*net;
  }
  const auto n = eval::write_frames(replay, a.out_dir, opts);
  std::cout << "wrote " << n << " frames to " << a.out_dir << "\n";
  return 0;
}

struct InspectArgs {
  std::string checkpoint;
  std::string log;
  int step = -1;
  std::string out;
};

int run_inspect(const InspectArgs& a) {
  const auto ckpt = nn::load_checkpoint(a.checkpoint);
  const auto net = nn::network_from_checkpoint(ckpt);
  std::cout << "network " << nn::to_string(net.config().kind) << ", config hash " << nn::hex64(ckpt.config_hash)
            << ", step " << ckpt.step << ", " << net.params().total_values() << " parameters\n";
  if (a.log.empty()) return 0;
  const auto replay = sim::read_replay(a.log);
  const auto frames = replay.frames();
  if (frames.empty()) throw std::runtime_error("log has no frames");
  const int t = a.step < 0 ? frames.back().t : a.step;
  if (t > frames.back().t) throw std::runtime_error("step " + std::to_string(t) + " is past the end of the log");
  const auto sc = sim::get_scenario(replay.header.config.scenario);
  const auto o = obs::observe(*sc, frames[static_cast<std::size_t>(t)].vehicles,
                              obs::ObsConfig::for_network(net.config()));
  const auto sal = eval::saliency(net, o);
  std::string attention = "null";
  if (net.config().kind == nn::NetworkKind::kDqgat) attention = eval::to_json(eval::attention_report(net, o));
  const std::string json = "{\"step\":" + std::to_string(t) + ",\"attention\":" + attention +
                           ",\"saliency\":" + eval::to_json(sal) + "}";
  std::cout << json << "\n";
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    std::ofstream(std::filesystem::path(a.out) / "inspect.json") << json << "\n";
    eval::Image img(static_cast<int>(sal.cols), static_cast<int>(sal.rows), 1);
    for (std::size_t r = 0; r < sal.rows; ++r) {
      for (std::size_t c = 0; c < sal.cols; ++c) {
        // forward up, left on the left
        *img.px(static_cast<int>(sal.cols - 1 - c), static_cast<int>(sal.rows - 1 - r)) =
            static_cast<std::uint8_t>(std::lround(255.0 * sal.pixel[r * sal.cols + c]));
      }
    }
    eval::write_pnm(std::filesystem::path(a.out) / "saliency.pgm", img);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DQ-GAT desk-scale driving agent: training, evaluation and inspection"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train with the actor/learner loop");
  train->add_option("--scenario-set", ta.scenario_set, "e.g. t_merge:regular,int_left:dense or junctions");
  train->add_option("--workers", ta.workers, "Experience collection threads");
  train->add_option("--steps", ta.steps, "Total pooled environment steps");
  train->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { ta.seed = s, ta.seed_set = true; },
                                            "Training seed (< 1e9)");
  train->add_option("--config", ta.config, "Trainer config JSON")->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_flag("--quiet", ta.quiet, "Do not echo the training log");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Benchmark an agent");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint for the dqgat agent")->check(CLI::ExistingFile);
  ev->add_option("--agent", ea.agent, "dqgat, fsm_ttc, random or constant:<kmh>");
  ev->add_option("--scenarios", ea.scenarios, "Comma-separated scenarios or junctions");
  ev->add_option("--density", ea.density, "regular, dense or both");
  ev->add_option("--trials", ea.trials, "Trials per scenario and density")->check(CLI::PositiveNumber);
  ev->add_option("--seed-base", ea.seed_base, "First evaluation seed (>= 1e9)");
  ev->add_option("--report", ea.report, "Report path (JSON lines; a .txt table is written beside it)");
  ev->add_option("--replay-dir", ea.replay_dir, "Write one episode log per attempt here");
  ev->add_option("--threads", ea.threads, "Parallel evaluation threads")->check(CLI::PositiveNumber);

  SelectArgs sa;
  auto* sel = app.add_subcommand("select", "Rank a run's checkpoints on validation seeds");
  sel->add_option("--run", sa.run, "Training output directory")->required()->check(CLI::ExistingDirectory);
  sel->add_option("--scenarios", sa.scenarios, "Comma-separated scenarios or junctions");
  sel->add_option("--density", sa.density, "regular, dense or both");
  sel->add_option("--trials", sa.trials, "Trials per scenario and density")->check(CLI::PositiveNumber);
  sel->add_option("--seed-base", sa.seed_base, "First validation seed");
  sel->add_option("--max-recounts", sa.max_recounts, "Jam recounts per trial (default 0: a jam is a failure)");
  sel->add_option("--threads", sa.threads, "Parallel evaluation threads")->check(CLI::PositiveNumber);

  ReplayArgs ra;
  auto* rp = app.add_subcommand("replay", "Render an episode log to PPM frames");
  rp->add_option("--log", ra.log, "Episode log")->required()->check(CLI::ExistingFile);
  rp->add_option("--out-dir", ra.out_dir, "Frame directory")->required();
  rp->add_option("--saliency", ra.saliency, "Checkpoint for a saliency side panel")->check(CLI::ExistingFile);
  rp->add_option("--scale", ra.scale, "Pixels per metre");

  InspectArgs ia;
  auto* in = app.add_subcommand("inspect", "Describe a checkpoint; with a log, emit attention and saliency");
  in->add_option("--checkpoint", ia.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  in->add_option("--obs-from-log", ia.log, "Episode log supplying the observation")->check(CLI::ExistingFile);
  in->add_option("--step", ia.step, "Log step (default: last)");
  in->add_option("--out", ia.out, "Directory for inspect.json and saliency.pgm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    std::cerr << app.help();
    return code;
  }
  try {
    if (*train) return run_train(ta);
    if (*ev) return run_eval(ea);
    if (*sel) return run_select(sa);
    if (*rp) return run_replay(ra);
    if (*in) return run_inspect(ia);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
