// Acceptance runner: one PASS/FAIL line per criterion.

#include <boost/math/distributions/chi_squared.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dqgat/agents/dqgat.hpp"
#include "dqgat/eval/benchmark.hpp"
#include "dqgat/eval/introspect.hpp"
#include "dqgat/nn/checkpoint.hpp"
#include "dqgat/obs/observation.hpp"
#include "dqgat/rl/trainer.hpp"
#include "dqgat/sim/replay.hpp"
#include "support/gradcheck.hpp"
#include "support/nn_fixtures.hpp"

using namespace dqgat;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

struct Options {
  fs::path cache_dir;
  bool retrain = false;
};

// ---------------------------------------------------------------- 1

template <typename F>
void grad_instances(Verdict& v, const char* layer, int count, double tol, double& worst, int& done, F make) {
  int failed = 0;
  double layer_worst = 0.0;
  for (int i = 0; i < count; ++i) {
    auto [inputs, loss] = make(i);
    const double h = tol > 1e-4 ? 1e-3 : 1e-4;
    const auto r = testing::check_gradients(inputs, loss, h, tol, 24, 100 + i);
    layer_worst = std::max(layer_worst, r.max_rel_error);
    if (r.checked == 0 || r.max_rel_error >= tol) ++failed;
    ++done;
  }
  worst = std::max(worst, layer_worst);
  v.require(failed == 0, fmt("%s: %d/%d instances above tolerance", layer, failed, count));
  v.note(fmt("%s %d inst worst %.1e", layer, count, layer_worst));
}

using GradCase = std::pair<std::vector<ad::Tensor64>, std::function<ad::Tensor64()>>;

Verdict criterion_gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  int done = 0;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 6);

  grad_instances(v, "linear", 20, 1e-4, worst, done, [&](int i) -> GradCase {
    nn::ParamList<double> params;
    nn::Rng init(i);
    const auto in = dim(rng), out = dim(rng), batch = dim(rng);
    auto layer = nn::Linear<double>::create(params, "l", in, out, init);
    auto x = testing::random_param({batch, in}, rng);
    const ad::Tensor64 c({batch, out}, testing::random_values(batch * out, rng));
    return {{x, layer.weight, layer.bias}, [=] { return ad::sum(ad::mul(layer.forward(x), c)); }};
  });

  grad_instances(v, "noisy linear (eval)", 20, 1e-4, worst, done, [&](int i) -> GradCase {
    nn::ParamList<double> params;
    nn::Rng init(i);
    const auto in = dim(rng), out = dim(rng), batch = dim(rng);
    auto layer = nn::NoisyLinear<double>::create(params, "n", in, out, 0.5, init);
    auto x = testing::random_param({batch, in}, rng);
    const ad::Tensor64 c({batch, out}, testing::random_values(batch * out, rng));
    return {{x, layer.weight, layer.bias},
            [=] { return ad::sum(ad::mul(layer.forward(x, nn::Mode::kEval, nullptr), c)); }};
  });

  grad_instances(v, "conv", 20, 1e-3, worst, done, [&](int i) -> GradCase {
    nn::ParamList<double> params;
    nn::Rng init(i);
    const std::size_t cin = 1 + i % 3, cout = 1 + (i / 3) % 4, side = 5 + i % 4;
    const ad::Conv2dSpec spec{1u + static_cast<std::size_t>(i % 2), 1};
    auto layer = nn::Conv<double>::create(params, "c", cin, cout, 3, spec, init);
    auto x = testing::random_param({1 + static_cast<std::size_t>(i % 2), cin, side, side + 1}, rng);
    const auto y = layer.forward(x);
    const ad::Tensor64 c(y.shape(), testing::random_values(y.size(), rng));
    return {{x, layer.weight, layer.bias}, [=] { return ad::sum(ad::mul(layer.forward(x), c)); }};
  });

  grad_instances(v, "gat", 20, 1e-4, worst, done, [&](int i) -> GradCase {
    nn::ParamList<double> params;
    nn::Rng init(i);
    const std::size_t batch = 1 + i % 2, nodes = 1 + i % 5, fin = dim(rng), fout = dim(rng);
    const auto score = i % 2 ? nn::ScoreActivation::kLeakyRelu : nn::ScoreActivation::kRelu;
    auto layer = nn::GatLayer<double>::create(params, "g", fin, fout, 1 + i % 3, i % 4 < 2, score, init);
    std::vector<std::uint8_t> valid(batch * nodes, 1);
    if (nodes > 2) valid[nodes - 1] = 0;
    const auto mask = nn::attention_mask(valid, batch, nodes);
    auto h = testing::random_param({batch * nodes, fin}, rng);
    const std::size_t fo = layer.out_features();
    const ad::Tensor64 c({batch * nodes, fo}, testing::random_values(batch * nodes * fo, rng));
    std::vector<ad::Tensor64> inputs{h};
    for (const auto& head : layer.heads) {
      inputs.push_back(head.weight);
      inputs.push_back(head.attention);
    }
    return {inputs, [=] { return ad::sum(ad::mul(layer.forward(h, batch, nodes, mask).features, c)); }};
  });

  grad_instances(v, "dueling", 20, 1e-4, worst, done, [&](int) -> GradCase {
    const std::size_t batch = dim(rng), actions = 1 + dim(rng);
    auto value = testing::random_param({batch}, rng);
    auto adv = testing::random_param({batch, actions}, rng);
    const ad::Tensor64 c({batch, actions}, testing::random_values(batch * actions, rng));
    return {{value, adv}, [=] { return ad::sum(ad::mul(nn::dueling_combine(value, adv), c)); }};
  });

  grad_instances(v, "q_forward", 10, 1e-4, worst, done, [&](int i) -> GradCase {
    const auto cfg = testing::tiny_config();
    auto net = std::make_shared<nn::QNetwork<double>>(cfg, 300 + i);
    const auto in = testing::random_input<double>(cfg, {1 + static_cast<std::size_t>(i % 4), 3}, rng);
    const ad::Tensor64 c({2, cfg.num_actions}, testing::random_values(2 * cfg.num_actions, rng));
    std::vector<ad::Tensor64> inputs;
    for (auto& [name, t] : net->params()) inputs.push_back(t);
    const auto mode = i % 2 ? nn::Mode::kTrain : nn::Mode::kEval;
    return {inputs, [=] {
              nn::Rng noise(77);
              return ad::sum(ad::mul(net->forward(in, mode, &noise).q, c));
            }};
  });

  const double elapsed = seconds_since(t0);
  v.require(done >= 100, fmt("only %d instances", done));
  v.require(elapsed < 120.0, fmt("runtime %.1f s", elapsed));
  v.note(fmt("%d instances in %.1f s", done, elapsed));
  return v;
}

// ---------------------------------------------------------------- 2, 3

std::vector<obs::Observation> scene_observations(const nn::QNetConfig& cfg, std::size_t count, sim::Density density,
                                                 std::size_t min_nodes, std::uint64_t seed) {
  const auto oc = obs::ObsConfig::for_network(cfg);
  const auto& scenarios = sim::junction_scenarios();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> act(0, sim::kNumActions - 1);
  std::vector<obs::Observation> out;
  std::uint64_t episode = 0;
  while (out.size() < count) {
    const auto id = scenarios[episode % scenarios.size()];
    auto world = sim::spawn_scenario(sim::ScenarioConfig::make(id, density, seed + episode++));
    for (int k = 0; k < 120 && !world.terminal() && out.size() < count; ++k) {
      world.step(act(rng));
      if (k % 7 != 3) continue;
      auto o = obs::observe(world, oc);
      if (o.nodes.size() >= min_nodes) out.push_back(std::move(o));
    }
  }
  return out;
}

Verdict criterion_dueling() {
  Verdict v;
  const auto cfg = nn::QNetConfig::desk();
  const nn::QNetwork<float> net(cfg, 5);
  const auto states = scene_observations(cfg, 1000, sim::Density::kRegular, 1, 11);
  double worst = 0.0;
  for (std::size_t i = 0; i < states.size(); i += 50) {
    std::vector<const obs::Observation*> ptrs;
    for (std::size_t k = i; k < std::min(states.size(), i + 50); ++k) ptrs.push_back(&states[k]);
    const auto out = net.forward(obs::make_batch(ptrs, cfg), nn::Mode::kEval);
    for (std::size_t b = 0; b < ptrs.size(); ++b) {
      const auto row = out.q.data().subspan(b * cfg.num_actions, cfg.num_actions);
      const double mean = std::accumulate(row.begin(), row.end(), 0.0) / cfg.num_actions;
      worst = std::max(worst, std::abs(mean - out.value.at(b)));
    }
  }
  v.require(worst <= 1e-5, fmt("max |mean Q - V| = %.2e", worst));
  v.note(fmt("%zu states, max |mean_a Q - V| = %.1e", states.size(), worst));
  return v;
}

Verdict criterion_attention() {
  Verdict v;
  const auto cfg = nn::QNetConfig::desk();
  const nn::QNetwork<float> net(cfg, 8);
  const auto scenes = scene_observations(cfg, 100, sim::Density::kDense, 3, 500);
  std::mt19937_64 rng(4);
  double worst_sum = 0.0, worst_perm = 0.0;
  std::size_t rows = 0;
  for (const auto& o : scenes) {
    const auto in = obs::make_input(o, cfg);
    const auto out = net.forward(in, nn::Mode::kEval);
    for (const auto& layer : out.attention) {
      for (const auto& head : layer) {
        const std::size_t n = head.dim(1);
        for (std::size_t r = 0; r < head.dim(0); ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += head.at(r * n + j);
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          ++rows;
        }
      }
    }
    std::vector<std::size_t> order(in.nodes);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin() + 1, order.begin() + static_cast<long>(o.nodes.size()), rng);
    const auto q2 = net.forward(testing::permute_nodes(in, order), nn::Mode::kEval).q;
    for (std::size_t a = 0; a < cfg.num_actions; ++a) {
      worst_perm = std::max(worst_perm, std::abs(double(out.q.at(a)) - double(q2.at(a))));
    }
  }
  v.require(worst_sum <= 1e-6, fmt("row sum error %.2e", worst_sum));
  v.require(worst_perm <= 1e-5, fmt("permutation error %.2e", worst_perm));
  v.note(fmt("%zu scenes, %zu rows, max |sum-1| %.1e, max perm dQ %.1e", scenes.size(), rows, worst_sum, worst_perm));
  return v;
}

// ---------------------------------------------------------------- 4

Verdict criterion_double_q() {
  Verdict v;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const std::size_t states = 12, actions = 5;
  std::vector<std::vector<double>> online(states, std::vector<double>(actions)), target = online;
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t a = 0; a < actions; ++a) {
      online[s][a] = u(rng);
      target[s][a] = u(rng);
    }
  }
  // Force a disagreement in every state: the target's best action is online's worst.
  std::size_t disagreements = 0;
  for (std::size_t s = 0; s < states; ++s) {
    const auto best = std::max_element(online[s].begin(), online[s].end()) - online[s].begin();
    const auto worst = std::min_element(online[s].begin(), online[s].end()) - online[s].begin();
    target[s][worst] = 20.0;
    target[s][best] = -20.0;
    disagreements += nn::argmax_lowest(std::span<const double>(target[s])) != static_cast<std::size_t>(best);
  }
  std::vector<double> rewards, qo, qt;
  std::vector<std::uint8_t> term;
  std::vector<std::size_t> next;
  std::bernoulli_distribution done(0.2);
  for (int i = 0; i < 300; ++i) {
    const std::size_t s = rng() % states;
    next.push_back(s);
    const bool t = done(rng);
    term.push_back(t);
    rewards.push_back(t && i % 2 ? sim::kCollisionReward : u(rng) / 10.0);
    qo.insert(qo.end(), online[s].begin(), online[s].end());
    qt.insert(qt.end(), target[s].begin(), target[s].end());
  }
  const double gamma = 0.99;
  const auto y = rl::double_q_targets(rewards, term, qo, qt, actions, gamma);
  std::size_t mismatches = 0, collisions = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double expected = rewards[i];
    if (!term[i]) {
      std::size_t a_star = 0;
      for (std::size_t a = 1; a < actions; ++a) {
        if (online[next[i]][a] > online[next[i]][a_star]) a_star = a;
      }
      expected = rewards[i] + gamma * target[next[i]][a_star];
    } else if (rewards[i] == sim::kCollisionReward) {
      ++collisions;
      mismatches += y[i] != -50.0;
    }
    mismatches += y[i] != expected;
  }
  v.require(disagreements == states, "online and target argmax agree somewhere");
  v.require(mismatches == 0, fmt("%zu targets differ from the manual evaluation", mismatches));
  v.require(collisions > 0, "no collision transitions exercised");
  v.note(fmt("%zu transitions over %zu tabular states, %zu terminal collisions, exact match", y.size(), states,
             collisions));
  return v;
}

// ---------------------------------------------------------------- 5

rl::Transition blank() { return {}; }

Verdict criterion_per() {
  Verdict v;
  {
    rl::ReplayBuffer buf(rl::PerConfig{.capacity = 2, .alpha = 1.0});
    buf.push(blank());
    buf.push(blank());
    const std::vector<std::size_t> ids{0, 1};
    const std::vector<double> p{3.0, 1.0};
    buf.update_priorities(ids, p);
    std::mt19937_64 rng(7);
    int first = 0;
    for (int i = 0; i < 10000; ++i) first += buf.sample(1, 0.4, rng).ids[0] == 0;
    const double f = first / 10000.0;
    v.require(f >= 0.72 && f <= 0.78, fmt("first-leaf frequency %.4f", f));
    v.note(fmt("[3,1] freq %.4f", f));
  }
  {
    rl::ReplayBuffer buf(rl::PerConfig{.capacity = 10});
    for (int i = 0; i < 10; ++i) buf.push(blank());
    std::mt19937_64 rng(2024);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 10000; ++i) ++counts[buf.sample(1, 0.4, rng).ids[0]];
    double stat = 0.0;
    for (int c : counts) stat += (c - 1000.0) * (c - 1000.0) / 1000.0;
    const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(9), stat);
    v.require(p > 0.01, fmt("chi-squared p = %.4f", p));
    v.note(fmt("uniform chi2 p %.3f", p));
  }
  {
    rl::ReplayBuffer buf(rl::PerConfig{.capacity = 700});
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (int op = 0; op < 10000; ++op) {
      if (buf.size() == 0 || rng() % 3 == 0) {
        buf.push(blank());
      } else {
        const std::vector<std::size_t> ids{rng() % buf.size()};
        const std::vector<double> p{u(rng)};
        buf.update_priorities(ids, p);
      }
    }
    const double err = std::abs(buf.total_priority() - buf.direct_leaf_sum());
    v.require(err <= 1e-6, fmt("root vs leaf sum %.2e", err));
    v.note(fmt("root - leaf sum %.1e", err));
  }
  return v;
}

// ---------------------------------------------------------------- 6

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool point_in(const sim::OrientedBox& b, sim::Vec2 p) {
  const sim::Vec2 d = p - b.center;
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  return std::abs(d.x * c + d.y * s) <= b.length / 2 && std::abs(-d.x * s + d.y * c) <= b.width / 2;
}

// Overlap by dense point sampling: 4000 points on each box.
bool sampled_overlap(const sim::OrientedBox& a, const sim::OrientedBox& b) {
  auto hits = [](const sim::OrientedBox& src, const sim::OrientedBox& dst) {
    const sim::Vec2 f{std::cos(src.heading), std::sin(src.heading)};
    const sim::Vec2 s{-f.y, f.x};
    for (int i = 0; i < 80; ++i) {
      for (int j = 0; j < 50; ++j) {
        const double lon = (i / 79.0 - 0.5) * src.length, lat = (j / 49.0 - 0.5) * src.width;
        if (point_in(dst, src.center + f * lon + s * lat)) return true;
      }
    }
    return false;
  };
  return hits(a, b) || hits(b, a);
}

sim::OrientedBox grown(sim::OrientedBox b, double m) {
  b.length += 2 * m;
  b.width += 2 * m;
  return b;
}

Verdict criterion_sim() {
  Verdict v;
  const auto dir = fs::temp_directory_path() / "dqgat_acceptance_logs";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::size_t identical = 0, logs = 0;
  for (auto id : sim::junction_scenarios()) {
    const auto cfg = sim::ScenarioConfig::make(id, sim::Density::kDense, 77);
    std::mt19937_64 actions(static_cast<std::uint64_t>(id));
    std::vector<std::size_t> seq(600);
    for (auto& a : seq) a = actions() % sim::kNumActions;
    for (int run = 0; run < 2; ++run) {
      auto w = sim::spawn_scenario(cfg);
      sim::ReplayWriter log(dir / fmt("%s_%d.jsonl", sim::to_string(id).c_str(), run), {cfg, "fixed", ""});
      log.write_initial(w);
      for (std::size_t k = 0; !w.terminal(); ++k) log.write_step(w.step(seq[k]), seq[k]);
    }
    ++logs;
    identical += read_bytes(dir / fmt("%s_0.jsonl", sim::to_string(id).c_str())) ==
                 read_bytes(dir / fmt("%s_1.jsonl", sim::to_string(id).c_str()));
  }
  v.require(identical == logs, fmt("%zu/%zu logs identical", identical, logs));

  sim::PidState st;
  double speed = 0.0, settle = -1.0;
  for (int k = 1; k <= 300; ++k) {
    speed = std::max(0.0, speed + sim::pid_acceleration(st, sim::kmh_to_ms(40.0), speed) * sim::kDt);
    const bool in_band = std::abs(sim::ms_to_kmh(speed) - 40.0) <= 0.5;
    if (in_band && settle < 0) settle = k * sim::kDt;
    if (!in_band) settle = -1.0;
  }
  v.require(settle > 0 && settle <= 10.0, fmt("PID settle %.1f s", settle));

  // The full world on an empty road, commanded 40 km/h.
  auto road = sim::ScenarioConfig::make(sim::ScenarioId::kStoppedLead, sim::Density::kRegular, 1);
  road.vehicle_count_min = road.vehicle_count_max = 0;
  auto w = sim::spawn_scenario(road);
  double world_settle = -1.0;
  for (int k = 1; k <= 150 && !w.terminal(); ++k) {
    w.step(4);
    const bool in_band = std::abs(sim::ms_to_kmh(w.ego().v) - 40.0) <= 0.5;
    if (in_band && world_settle < 0) world_settle = k * sim::kDt;
    if (!in_band) world_settle = -1.0;
  }
  v.require(world_settle > 0 && world_settle <= 10.0, fmt("world settle %.1f s", world_settle));

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> pos(-4.0, 4.0), ang(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> len(1.0, 6.0), wid(0.5, 2.5);
  int checked = 0, agree = 0;
  while (checked < 200) {
    const sim::OrientedBox a{{pos(rng), pos(rng)}, ang(rng), len(rng), wid(rng)};
    const sim::OrientedBox b{{pos(rng), pos(rng)}, ang(rng), len(rng), wid(rng)};
    const bool lo = sampled_overlap(grown(a, -0.025), grown(b, -0.025));
    const bool hi = sampled_overlap(grown(a, 0.025), grown(b, 0.025));
    if (lo != hi) continue;
    ++checked;
    sim::VehicleState va, vb;
    va.x = a.center.x, va.y = a.center.y, va.psi = a.heading, va.l = a.length, va.w = a.width;
    vb.x = b.center.x, vb.y = b.center.y, vb.psi = b.heading, vb.l = b.length, vb.w = b.width;
    agree += sim::check_collision(va, vb) == hi;
  }
  v.require(agree == checked, fmt("collision oracle agreement %d/%d", agree, checked));
  v.note(fmt("%zu/%zu logs bit-identical, PID settle %.1f s (world %.1f s), SAT %d/%d", identical, logs, settle,
             world_settle, agree, checked));
  return v;
}

// ---------------------------------------------------------------- 7

bool within_one_pixel(const obs::BevGrid& a, const obs::BevGrid& b) {
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int r = 0; r < a.rows; ++r) {
      for (int c = 0; c < a.cols; ++c) {
        if (a.at(ch, r, c) == b.at(ch, r, c)) continue;
        bool found = false;
        for (int dr = -1; dr <= 1 && !found; ++dr) {
          for (int dc = -1; dc <= 1 && !found; ++dc) {
            const int rr = r + dr, cc = c + dc;
            found = rr >= 0 && rr < a.rows && cc >= 0 && cc < a.cols && b.at(ch, rr, cc) == a.at(ch, r, c);
          }
        }
        if (!found) return false;
      }
    }
  }
  return true;
}

Verdict criterion_bev() {
  Verdict v;
  const auto spec = obs::BevSpec::paper();
  const auto w0 = sim::spawn_scenario(sim::ScenarioConfig::make(sim::ScenarioId::kIntCross, sim::Density::kRegular, 1));
  const auto g = obs::rasterize(w0, spec);
  v.require(g.channels == 3 && g.rows == 200 && g.cols == 280 && g.resolution == 0.25,
            fmt("paper raster %dx%dx%d at %.3f", g.channels, g.rows, g.cols, g.resolution));
  const auto net_spec = obs::ObsConfig::for_network(nn::QNetConfig::paper_scale()).bev;
  v.require(net_spec.rows == 200 && net_spec.cols == 280 && net_spec.resolution == 0.25, "paper network raster");

  struct Golden {
    const char* file;
    sim::ScenarioId scenario;
    std::uint64_t seed;
    int steps;
  };
  const Golden goldens[] = {{"t_merge_seed3.pgm", sim::ScenarioId::kTMerge, 3, 0},
                            {"int_left_seed5_step40.pgm", sim::ScenarioId::kIntLeft, 5, 40},
                            {"roundabout_seed11_step80.pgm", sim::ScenarioId::kRoundabout, 11, 80}};
  int exact = 0;
  for (const auto& gc : goldens) {
    auto w = sim::spawn_scenario(sim::ScenarioConfig::make(gc.scenario, sim::Density::kRegular, gc.seed));
    for (int k = 0; k < gc.steps; ++k) w.step(2);
    const auto path = fs::path(DQGAT_GOLDEN_DIR) / gc.file;
    exact += fs::exists(path) && read_bytes(path) == obs::to_pgm(obs::rasterize(w, obs::BevSpec::desk()));
  }
  v.require(exact == 3, fmt("%d/3 golden images bit-exact", exact));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-200.0, 200.0), angle(-std::numbers::pi, std::numbers::pi);
  int rigid = 0, total = 0;
  for (auto id : sim::junction_scenarios()) {
    auto w = sim::spawn_scenario(sim::ScenarioConfig::make(id, sim::Density::kDense, 6));
    for (int k = 0; k < 30; ++k) w.step(2);
    for (auto s : {obs::BevSpec::desk(), obs::BevSpec::paper()}) {
      const auto a = obs::rasterize(w, s);
      const auto b = obs::rasterize(w.transformed({shift(rng), shift(rng)}, angle(rng)), s);
      ++total;
      rigid += within_one_pixel(a, b) && within_one_pixel(b, a);
    }
  }
  v.require(rigid == total, fmt("rigid motion %d/%d", rigid, total));
  v.note(fmt("paper raster 3x200x280 @0.25 m, goldens %d/3, rigid motion %d/%d", exact, rigid, total));
  return v;
}

// ---------------------------------------------------------------- 8, 9

nn::QNetConfig learning_net() {
  auto c = nn::QNetConfig::desk();
  c.bev_rows = 50;
  c.bev_cols = 70;
  c.encoder_channels = {8, 16, 32};
  c.z_dim = 32;
  c.embed_dim = 32;
  c.gat_dim = 32;
  c.heads1 = 2;
  c.heads2 = 2;
  c.stream_hidden = 64;
  return c;
}

rl::TrainerConfig learning_trainer(const std::string& scenarios, std::size_t total_steps) {
  rl::TrainerConfig c;
  c.net = learning_net();
  c.batch = 32;
  c.learner.lr = 1e-4;
  c.learner.target_sync = 250;
  c.collect_interval = 1000;
  c.rounds_per_update = 300;
  c.total_steps = total_steps;
  c.checkpoint_every = 10;
  c.seed = 1;
  c.scenarios = rl::parse_scenario_set(scenarios);
  return c;
}

struct Trained {
  fs::path checkpoint;
  double train_seconds = 0.0;
  bool cached = false;
  eval::CheckpointScore validation;
};

// Picks the run's best checkpoint on validation seeds, jams counted as failures; the choice and its cost are cached
// with the run.
void select_checkpoint(Trained& t, const fs::path& dir, sim::ScenarioId scenario) {
  const auto choice = dir / "selected.txt";
  if (t.cached && fs::exists(choice)) {
    std::ifstream in(choice);
    std::string name;
    double seconds = 0.0;
    in >> name >> t.validation.successes >> t.validation.trials >> seconds;
    t.checkpoint = dir / name;
    t.validation.checkpoint = t.checkpoint;
    t.train_seconds += seconds;
    return;
  }
  const auto t0 = Clock::now();
  eval::BenchmarkConfig cfg;
  cfg.scenarios = {scenario};
  cfg.trials = 100;
  cfg.seed_base = eval::kValidationSeedBase;
  cfg.max_recounts = 0;
  t.validation = eval::rank_checkpoints(dir, cfg).front();
  t.checkpoint = t.validation.checkpoint;
  const double seconds = seconds_since(t0);
  t.train_seconds += seconds;
  std::ofstream(choice) << t.checkpoint.filename().string() << " " << t.validation.successes << " "
                        << t.validation.trials << " " << seconds << "\n";
}

Trained train_cached(const rl::TrainerConfig& cfg, const Options& opt, const std::string& tag) {
  const auto dir = opt.cache_dir / fmt("%s_%016llx", tag.c_str(), static_cast<unsigned long long>(cfg.hash()));
  Trained t{dir / "final.ckpt"};
  const auto timing = dir / "train_seconds.txt";
  const auto scenario = cfg.scenarios.front().scenario;
  if (!opt.retrain && fs::exists(t.checkpoint) && fs::exists(timing)) {
    std::ifstream(timing) >> t.train_seconds;
    t.cached = true;
    select_checkpoint(t, dir, scenario);
    return t;
  }
  fs::create_directories(dir);
  std::printf("  training %s (%zu env steps) into %s\n", tag.c_str(), cfg.total_steps, dir.c_str());
  std::fflush(stdout);
  const auto t0 = Clock::now();
  rl::TrainerHooks hooks;
  hooks.on_log = [&](const rl::TrainLogRecord& r) {
    if (r.env_steps % 10000 == 0) {
      std::printf("    %s env %llu success_100 %.2f (%.0f s)\n", tag.c_str(), static_cast<unsigned long long>(r.env_steps),
                  r.success_rate_100, seconds_since(t0));
      std::fflush(stdout);
    }
  };
  rl::run_async_training(cfg, dir, hooks);
  t.train_seconds = seconds_since(t0);
  std::ofstream(timing) << t.train_seconds << "\n";
  fs::remove(dir / "selected.txt");
  select_checkpoint(t, dir, scenario);
  return t;
}

eval::CellReport run_cell(const std::string& agent, sim::ScenarioId scenario, int trials,
                          const std::optional<fs::path>& checkpoint = std::nullopt) {
  eval::BenchmarkConfig cfg;
  cfg.agent = agent;
  cfg.checkpoint = checkpoint;
  cfg.scenarios = {scenario};
  cfg.densities = {sim::Density::kRegular};
  cfg.trials = trials;
  return eval::run_benchmark(cfg).cells.front();
}

std::string describe(const eval::CellReport& c) {
  return fmt("%s %.0f%%%s", c.agent.c_str(), c.success_rate,
             c.ct_mean ? fmt(" CT %.1f s", *c.ct_mean).c_str() : "");
}

constexpr std::size_t kToySteps = 100000;
constexpr std::size_t kMergeSteps = 300000;

Verdict criterion_learning(const Options& opt, std::optional<fs::path>& merge_ckpt) {
  Verdict v;
  const auto t0 = Clock::now();
  const auto toy = train_cached(learning_trainer("stopped_lead", kToySteps), opt, "stopped_lead");
  const auto toy_cell = run_cell("dqgat", sim::ScenarioId::kStoppedLead, 100, toy.checkpoint);
  v.require(toy_cell.success_rate >= 90.0, fmt("toy success %.0f%%", toy_cell.success_rate));
  v.note(fmt("toy: %zu steps, %s (validation %d/%d), success %.0f%% (%d collisions)", kToySteps,
             toy.checkpoint.filename().c_str(), toy.validation.successes, toy.validation.trials,
             toy_cell.success_rate, toy_cell.collisions));

  const auto merge = train_cached(learning_trainer("t_merge:regular", kMergeSteps), opt, "t_merge");
  merge_ckpt = merge.checkpoint;
  const auto dq = run_cell("dqgat", sim::ScenarioId::kTMerge, 100, merge.checkpoint);
  const auto rnd = run_cell("random", sim::ScenarioId::kTMerge, 100);
  const double margin = dq.success_rate - rnd.success_rate;
  v.require(margin >= 30.0, fmt("t_merge margin %.0f pp", margin));
  v.note(fmt("t_merge: %s (validation %d/%d), %s vs %s, margin %.0f pp", merge.checkpoint.filename().c_str(),
             merge.validation.successes, merge.validation.trials, describe(dq).c_str(), describe(rnd).c_str(),
             margin));

  const double total = toy.train_seconds + merge.train_seconds + seconds_since(t0);
  v.require(total <= 4 * 3600.0, fmt("runtime %.0f s", total));
  v.note(fmt("train+eval %.0f s%s", total, toy.cached && merge.cached ? " (training cached)" : ""));
  return v;
}

Verdict criterion_baselines(const std::optional<fs::path>& merge_ckpt) {
  Verdict v;
  int ordered = 0;
  const auto& scenarios = sim::junction_scenarios();
  std::string detail;
  for (auto id : scenarios) {
    const auto fsm = run_cell("fsm_ttc", id, 100);
    const auto rnd = run_cell("random", id, 100);
    ordered += fsm.success_rate > rnd.success_rate;
    detail += fmt(" %s %.0f>%.0f", sim::to_string(id).c_str(), fsm.success_rate, rnd.success_rate);
  }
  v.require(ordered == static_cast<int>(scenarios.size()),
            fmt("FSM beats random in %d/%zu scenarios", ordered, scenarios.size()));
  v.note("FSM vs random S.R.:" + detail);
  if (!merge_ckpt) {
    v.require(false, "no trained t_merge checkpoint (criterion 8 skipped)");
    return v;
  }
  const auto dq = run_cell("dqgat", sim::ScenarioId::kTMerge, 100, *merge_ckpt);
  const auto fsm = run_cell("fsm_ttc", sim::ScenarioId::kTMerge, 100);
  v.require(dq.ct_mean && fsm.ct_mean && *dq.ct_mean <= *fsm.ct_mean, "DQ-GAT completion time above FSM-TTC's");
  v.note(fmt("t_merge CT: dqgat %.2f s vs fsm_ttc %.2f s", dq.ct_mean.value_or(NAN), fsm.ct_mean.value_or(NAN)));
  return v;
}

// ---------------------------------------------------------------- 10

Verdict criterion_introspection() {
  Verdict v;
  auto cfg = testing::tiny_config();
  cfg.bev_rows = 20;
  cfg.bev_cols = 28;
  cfg.max_nodes = 8;
  const nn::QNetwork<float> fnet(cfg, 6);
  const auto net = fnet.cast<double>();
  auto world = sim::spawn_scenario(sim::ScenarioConfig::make(sim::ScenarioId::kIntLeft, sim::Density::kDense, 8));
  for (int i = 0; i < 30 && !world.terminal(); ++i) world.step(2);
  const auto o = obs::observe(world, obs::ObsConfig::for_network(cfg));
  const auto input = eval::to_double(obs::make_input(o, cfg));
  const auto s = eval::saliency(net, input);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> pick(0, s.gradient.size() - 1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto i = pick(rng);
    auto plus = input, minus = input;
    std::vector<double> base(input.bev.data().begin(), input.bev.data().end());
    plus.bev = nn::Tensor<double>(input.bev.shape(), base);
    minus.bev = nn::Tensor<double>(input.bev.shape(), base);
    plus.bev.data()[i] += h;
    minus.bev.data()[i] -= h;
    const double fd = std::abs(eval::greedy_q(net, plus, s.action) - eval::greedy_q(net, minus, s.action)) / (2 * h);
    worst = std::max(worst, std::abs(fd - s.gradient[i]));
  }
  v.require(worst < 1e-3, fmt("saliency vs FD %.2e", worst));

  std::size_t checked = 0, equal = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto w = sim::spawn_scenario(sim::ScenarioConfig::make(sim::ScenarioId::kIntCross, sim::Density::kDense, seed));
    for (int i = 0; i < 25 && !w.terminal(); ++i) w.step(2);
    const auto obs_k = obs::observe(w, obs::ObsConfig::for_network(cfg));
    const auto r = eval::attention_report(fnet, obs_k);
    const auto in = obs::make_input(obs_k, cfg);
    const auto mask = nn::attention_mask(in.valid, 1, in.nodes);
    const auto o1 = fnet.gat(0).forward(fnet.graph_input(in, fnet.encode_bev(in)), 1, in.nodes, mask);
    const auto o2 = fnet.gat(1).forward(o1.features, 1, in.nodes, mask);
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const auto& heads = layer == 0 ? o1.attention : o2.attention;
      for (std::size_t hd = 0; hd < heads.size(); ++hd) {
        for (std::size_t j = 0; j < in.nodes; ++j) {
          ++checked;
          equal += r.alpha[layer][hd][j] == heads[hd].at(j);
        }
      }
    }
  }
  v.require(checked > 0 && equal == checked, fmt("attention equality %zu/%zu", equal, checked));
  v.note(fmt("saliency max |grad - FD| %.1e over 20 pixels, attention %zu/%zu coefficients equal", worst, equal,
             checked));
  return v;
}

// ---------------------------------------------------------------- 11

rl::TrainerConfig async_trainer(std::size_t workers, std::uint64_t seed) {
  rl::TrainerConfig c;
  c.net = testing::tiny_config();
  c.net.bev_rows = 20;
  c.net.bev_cols = 28;
  c.net.max_nodes = 6;
  c.batch = 16;
  c.collect_interval = 400;
  c.rounds_per_update = 4;
  c.total_steps = 2000;
  c.workers = workers;
  c.seed = seed;
  c.per.capacity = 5000;
  c.learner.target_sync = 5;
  c.scenarios = rl::parse_scenario_set("junctions");
  return c;
}

Verdict criterion_async() {
  Verdict v;
  const auto four = rl::run_async_training(async_trainer(4, 3));
  const std::uint64_t counted = std::accumulate(four.worker_pushed.begin(), four.worker_pushed.end(), std::uint64_t{0});
  v.require(four.worker_pushed.size() == 4, "worker count");
  v.require(counted == four.buffer_pushed, fmt("workers counted %llu, buffer received %llu",
                                               static_cast<unsigned long long>(counted),
                                               static_cast<unsigned long long>(four.buffer_pushed)));
  v.require(counted == 2000, "total transitions");

  const auto a = rl::run_async_training(async_trainer(1, 7));
  const auto b = rl::run_async_training(async_trainer(1, 7));
  const bool same = a.log == b.log && a.learner->online().equal_values(b.learner->online()) &&
                    a.learner->target().equal_values(b.learner->target());
  v.require(same, "single-worker runs differ");
  v.note(fmt("4 workers: %llu counted == %llu pushed; single worker: %zu log records and weights identical",
             static_cast<unsigned long long>(counted), static_cast<unsigned long long>(four.buffer_pushed),
             a.log.size()));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks, one line per criterion"};
  Options opt;
  opt.cache_dir = fs::path(DQGAT_ACCEPTANCE_CACHE);
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 11));
  app.add_option("--cache-dir", opt.cache_dir, "Directory holding trained checkpoints");
  app.add_flag("--retrain", opt.retrain, "Ignore cached checkpoints");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

  std::optional<fs::path> merge_ckpt;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, criterion_gradients},
      {2, criterion_dueling},
      {3, criterion_attention},
      {4, criterion_double_q},
      {5, criterion_per},
      {6, criterion_sim},
      {7, criterion_bev},
      {8, [&] { return criterion_learning(opt, merge_ckpt); }},
      {9,
       [&] {
         if (!merge_ckpt) {
           const auto t = learning_trainer("t_merge:regular", kMergeSteps);
           const auto dir = opt.cache_dir / fmt("t_merge_%016llx", static_cast<unsigned long long>(t.hash()));
           std::string name;
           std::ifstream(dir / "selected.txt") >> name;
           if (!name.empty() && fs::exists(dir / name)) merge_ckpt = dir / name;
         }
         return criterion_baselines(merge_ckpt);
       }},
      {10, criterion_introspection},
      {11, criterion_async},
  };

  int failed = 0;
  for (const auto& [k, run] : criteria) {
    if (!wanted(k)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::string notes;
    for (const auto& n : v.notes) notes += (notes.empty() ? "" : "; ") + n;
    std::printf("criterion %2d: %s (%.1f s) %s\n", k, v.pass ? "PASS" : "FAIL", seconds_since(t0), notes.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
