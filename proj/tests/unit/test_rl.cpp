#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "dqgat/obs/observation.hpp"
#include "dqgat/rl/trainer.hpp"

using namespace dqgat;

namespace {

nn::QNetConfig tiny_net(double sigma0 = 0.5) {
  nn::QNetConfig c;
  c.bev_rows = 20;
  c.bev_cols = 28;
  c.encoder_channels = {4, 8};
  c.z_dim = 16;
  c.embed_dim = 8;
  c.gat_dim = 8;
  c.heads1 = 2;
  c.heads2 = 2;
  c.stream_hidden = 16;
  c.max_nodes = 6;
  c.sigma0 = sigma0;
  return c;
}

rl::Transition dummy_transition(float reward) {
  rl::Transition t;
  t.reward = reward;
  return t;
}

// Observations from real scenes, consecutive steps under a fixed action.
std::vector<rl::Transition> scene_transitions(const nn::QNetConfig& net, std::size_t n, std::uint64_t seed) {
  const auto oc = obs::ObsConfig::for_network(net);
  auto world = sim::spawn_scenario(sim::ScenarioConfig::make(sim::ScenarioId::kIntLeft, sim::Density::kRegular, seed));
  std::vector<rl::Transition> out;
  auto current = std::make_shared<const obs::Observation>(obs::observe(world, oc));
  for (std::size_t i = 0; i < n && !world.terminal(); ++i) {
    const std::size_t a = (i * 3) % 5;
    const auto outcome = world.step(i < 20 ? 3 : a);
    auto next = std::make_shared<const obs::Observation>(obs::observe(world, oc));
    out.push_back({current, static_cast<std::uint8_t>(a), static_cast<float>(outcome.reward), next,
                   outcome.events.terminal()});
    current = next;
  }
  return out;
}

std::vector<double> eval_q(const nn::QNetwork<float>& net, const nn::QNetConfig& cfg,
                           const std::vector<rl::Transition>& batch) {
  std::vector<const obs::Observation*> ptrs;
  for (const auto& t : batch) ptrs.push_back(t.s_next.get());
  const auto q = net.forward(obs::make_batch(ptrs, cfg), nn::Mode::kEval).q;
  return {q.data().begin(), q.data().end()};
}

std::vector<float> snapshot(const nn::QNetwork<float>& net) {
  std::vector<float> out;
  for (const auto& [name, p] : net.params()) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

rl::TrainerConfig tiny_trainer(std::size_t workers, std::uint64_t seed) {
  rl::TrainerConfig c;
  c.net = tiny_net();
  c.batch = 16;
  c.collect_interval = 200;
  c.rounds_per_update = 4;
  c.total_steps = 600;
  c.workers = workers;
  c.seed = seed;
  c.per.capacity = 5000;
  c.learner.target_sync = 5;
  c.scenarios = rl::parse_scenario_set("stopped_lead,t_merge:dense");
  return c;
}

}  // namespace

TEST_CASE("sum tree keeps internal nodes equal to child sums") {
  rl::SumTree tree(7);
  tree.set(0, 1.0);
  tree.set(6, 2.5);
  tree.set(3, 0.5);
  CHECK(tree.total() == doctest::Approx(4.0));
  CHECK(tree.find(0.5) == 0);
  CHECK(tree.find(1.2) == 3);
  CHECK(tree.find(3.9) == 6);
  CHECK(tree.max_inconsistency() == 0.0);
  CHECK_THROWS_AS(tree.set(7, 1.0), std::out_of_range);
  CHECK_THROWS_AS(tree.set(1, -1.0), std::invalid_argument);
}

TEST_CASE("push into empty buffer gives size one at the initial priority") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 8});
  buf.push(dummy_transition(1.0f));
  CHECK(buf.size() == 1);
  CHECK(buf.total_priority() == doctest::Approx(1.0));
}

TEST_CASE("ring semantics evict the oldest transition") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 5});
  for (int i = 0; i < 6; ++i) buf.push(dummy_transition(static_cast<float>(i)));
  CHECK(buf.size() == 5);
  CHECK(buf.pushed() == 6);
  std::mt19937_64 rng(1);
  std::set<float> seen;
  for (int k = 0; k < 50; ++k) {
    for (const auto& t : buf.sample(5, 0.4, rng).items) seen.insert(t.reward);
  }
  CHECK(seen.count(0.0f) == 0);
  CHECK(seen == std::set<float>{1, 2, 3, 4, 5});
}

TEST_CASE("tree root equals the direct leaf sum after random pushes and updates") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 700});
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) buf.push(dummy_transition(0.0f));
  CHECK(std::abs(buf.total_priority() - buf.direct_leaf_sum()) < 1e-6);

  std::uniform_int_distribution<int> coin(0, 2);
  for (int op = 0; op < 10000; ++op) {
    if (coin(rng) == 0) {
      buf.push(dummy_transition(0.0f));
    } else {
      std::vector<std::size_t> ids{std::uniform_int_distribution<std::size_t>(0, buf.size() - 1)(rng)};
      std::vector<double> p{u(rng)};
      buf.update_priorities(ids, p);
    }
  }
  CHECK(std::abs(buf.total_priority() - buf.direct_leaf_sum()) < 1e-6);
  CHECK(buf.tree_inconsistency() < 1e-6);
}

TEST_CASE("priorities 3 and 1 with alpha 1 sample the first leaf about 75% of the time") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 2, .alpha = 1.0});
  buf.push(dummy_transition(0.0f));
  buf.push(dummy_transition(1.0f));
  const std::vector<std::size_t> ids{0, 1};
  const std::vector<double> p{3.0, 1.0};
  buf.update_priorities(ids, p);
  std::mt19937_64 rng(7);
  int first = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) first += buf.sample(1, 0.4, rng).ids[0] == 0;
  const double freq = static_cast<double>(first) / draws;
  CHECK(freq >= 0.72);
  CHECK(freq <= 0.78);
}

TEST_CASE("uniform priorities pass a chi-squared uniformity test") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 10});
  for (int i = 0; i < 10; ++i) buf.push(dummy_transition(static_cast<float>(i)));
  std::mt19937_64 rng(2024);
  std::vector<int> counts(10, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[buf.sample(1, 0.4, rng).ids[0]];
  const double expected = draws / 10.0;
  double stat = 0.0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  const double p_value = 1.0 - boost::math::cdf(boost::math::chi_squared(9), stat);
  CHECK(p_value > 0.01);
}

TEST_CASE("beta 1 with uniform priorities gives unit weights") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 32});
  for (int i = 0; i < 20; ++i) buf.push(dummy_transition(0.0f));
  std::mt19937_64 rng(3);
  const auto batch = buf.sample(8, 1.0, rng);
  for (double w : batch.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("importance weights follow (N P)^-beta normalised by the maximum") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 4, .alpha = 1.0});
  for (int i = 0; i < 4; ++i) buf.push(dummy_transition(0.0f));
  const std::vector<std::size_t> ids{0, 1, 2, 3};
  const std::vector<double> p{1.0, 2.0, 3.0, 4.0};
  buf.update_priorities(ids, p);
  std::mt19937_64 rng(9);
  const double beta = 0.5;
  const auto batch = buf.sample(4, beta, rng);
  std::vector<double> raw;
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(batch.probabilities[k] == doctest::Approx(p[batch.ids[k]] / 10.0));
    raw.push_back(std::pow(4.0 * batch.probabilities[k], -beta));
  }
  const double mx = *std::max_element(raw.begin(), raw.end());
  for (std::size_t k = 0; k < 4; ++k) CHECK(batch.weights[k] == doctest::Approx(raw[k] / mx));
}

TEST_CASE("underfull buffer refuses to sample") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 10});
  buf.push(dummy_transition(0.0f));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(buf.sample(2, 0.4, rng), rl::UnderfullBuffer);
}

TEST_CASE("leaf priorities mirror the latest update and new items get the max") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 10, .alpha = 0.6});
  for (int i = 0; i < 3; ++i) buf.push(dummy_transition(0.0f));
  const std::vector<std::size_t> ids{1, 1};
  const std::vector<double> p{5.0, 0.0};
  buf.update_priorities(ids, p);
  CHECK(buf.leaf_priority(1) == doctest::Approx(std::pow(1e-3, 0.6)));
  CHECK(buf.max_priority() == doctest::Approx(5.0));
  const auto id = buf.push(dummy_transition(0.0f));
  CHECK(buf.leaf_priority(id) == doctest::Approx(std::pow(5.0, 0.6)));
}

TEST_CASE("per beta anneals linearly") {
  rl::PerConfig c;
  CHECK(c.beta(0.0) == doctest::Approx(0.4));
  CHECK(c.beta(0.5) == doctest::Approx(0.7));
  CHECK(c.beta(2.0) == doctest::Approx(1.0));
}

TEST_CASE("concurrent pushes neither lose nor duplicate transitions") {
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 40000});
  const int threads = 4;
  const int per_thread = 5000;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = 0; i < per_thread; ++i) buf.push(dummy_transition(static_cast<float>(t * per_thread + i)));
    });
  }
  for (auto& th : pool) th.join();
  CHECK(buf.size() == threads * per_thread);
  CHECK(buf.pushed() == threads * per_thread);
  std::mt19937_64 rng(5);
  const auto all = buf.sample(threads * per_thread, 1.0, rng);
  std::set<float> seen;
  for (const auto& t : all.items) seen.insert(t.reward);
  CHECK(seen.size() == static_cast<std::size_t>(threads * per_thread));
}

TEST_CASE("double-Q targets on tabular networks follow the online argmax") {
  // Two states, two actions. Online prefers action 1 in s0 and action 0 in s1;
  // the target prefers the opposite, so the decoupling is visible.
  const double online[2][2] = {{0.1, 0.9}, {0.7, 0.2}};
  const double target[2][2] = {{5.0, -1.0}, {-3.0, 4.0}};
  const std::vector<int> next_state{0, 1, 1, 0};
  const std::vector<double> rewards{0.5, 1.0, -50.0, 0.25};
  const std::vector<std::uint8_t> terminal{0, 0, 1, 0};
  std::vector<double> qo, qt;
  for (int s : next_state) {
    qo.insert(qo.end(), {online[s][0], online[s][1]});
    qt.insert(qt.end(), {target[s][0], target[s][1]});
  }
  const double gamma = 0.9;
  const auto y = rl::double_q_targets(rewards, terminal, qo, qt, 2, gamma);
  CHECK(y[0] == 0.5 + 0.9 * -1.0);
  CHECK(y[1] == 1.0 + 0.9 * -3.0);
  CHECK(y[2] == -50.0);
  CHECK(y[3] == 0.25 + 0.9 * -1.0);
}

TEST_CASE("terminal transitions and gamma zero give y equal to r") {
  const std::vector<double> qo{1, 2, 3, 4, 5}, qt{9, 9, 9, 9, 9};
  const std::vector<double> r{-50.0};
  const std::vector<std::uint8_t> term{1}, live{0};
  CHECK(rl::double_q_targets(r, term, qo, qt, 5, 0.99)[0] == -50.0);
  const std::vector<double> r2{0.75};
  CHECK(rl::double_q_targets(r2, live, qo, qt, 5, 0.0)[0] == 0.75);
  CHECK(rl::double_q_targets(r2, live, qo, qt, 5, 0.5)[0] == 0.75 + 0.5 * 9);
}

TEST_CASE("td loss is zero with zero gradient when targets equal Q") {
  ad::Tape<double> tape;
  ad::Tape<double>::Scope scope(tape);
  auto q = ad::BasicTensor<double>::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> a{2, 0};
  const std::vector<double> y{3, 4}, w{0.5, 1.0};
  auto l = rl::td_loss(q, a, y, w);
  CHECK(l.loss.at(0) == 0.0);
  tape.backward(l.loss);
  for (double g : q.grad()) CHECK(g == 0.0);
}

TEST_CASE("td loss of a scalar network matches hand arithmetic") {
  // Q(s, a) = theta * s * (a + 1), one transition s = 2, a = 1, y = 3, w = 0.8.
  ad::Tape<double> tape;
  ad::Tape<double>::Scope scope(tape);
  auto theta = ad::BasicTensor<double>::parameter({1}, {0.5});
  auto x = ad::BasicTensor<double>({1, 2}, {2.0, 4.0});
  auto q = ad::mul(x, theta);
  const std::vector<std::size_t> a{1};
  const std::vector<double> y{3.0}, w{0.8};
  auto l = rl::td_loss(q, a, y, w);
  CHECK(l.loss.at(0) == doctest::Approx(0.8 * 1.0 * 1.0));
  CHECK(l.td[0] == doctest::Approx(1.0));
  tape.backward(l.loss);
  // d/dtheta 0.8 (3 - 4 theta)^2 = -6.4 (3 - 4 theta)
  CHECK(theta.grad()[0] == doctest::Approx(-6.4));
  const auto p = rl::td_priorities(l.td, 1e-3);
  CHECK(p[0] == doctest::Approx(1.001));
}

TEST_CASE("first Adam step moves each weight by about lr against its gradient") {
  nn::ParamList<float> params;
  auto w = params.add("w", {3}, {1.0f, -2.0f, 0.5f});
  rl::Adam adam(params, {.lr = 0.01});
  params.zero_grad();
  w.impl()->ensure_grad();
  w.grad()[0] = 2.0f;
  w.grad()[1] = -0.5f;
  w.grad()[2] = 0.0f;
  adam.step(params);
  CHECK(w.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(w.data()[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(w.data()[2] == doctest::Approx(0.5));
}

TEST_CASE("gradient clipping rescales to the maximum norm") {
  nn::ParamList<float> params;
  auto w = params.add("w", {2}, {0.0f, 0.0f});
  w.impl()->ensure_grad();
  w.grad()[0] = 30.0f;
  w.grad()[1] = 40.0f;
  CHECK(rl::clip_grad_norm(params, 10.0) == doctest::Approx(50.0));
  CHECK(w.grad()[0] == doctest::Approx(6.0));
  CHECK(w.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("learner targets match the pure double-Q rule with noise disabled") {
  const auto net = tiny_net(0.0);
  rl::Learner learner(net, {.gamma = 0.9, .lr = 1e-2, .target_sync = 1000}, 11);
  const auto batch = scene_transitions(net, 12, 4);
  REQUIRE(batch.size() == 12);
  // Pull the online net towards action 4 so its argmax departs from the frozen target's.
  std::vector<double> w(batch.size(), 1.0), pull;
  for (const auto& t : batch) pull.push_back(t.action == 4 ? 5.0 : -5.0);
  for (int i = 0; i < 20; ++i) learner.train_step(batch, pull, w);
  const auto qo = eval_q(learner.online(), net, batch);
  const auto qt = eval_q(learner.target(), net, batch);
  std::vector<double> r;
  std::vector<std::uint8_t> term;
  bool disagree = false;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    r.push_back(batch[i].reward);
    term.push_back(batch[i].terminal);
    const auto row_o = std::span<const double>(qo).subspan(i * 5, 5);
    const auto row_t = std::span<const double>(qt).subspan(i * 5, 5);
    disagree |= nn::argmax_lowest(row_o) != nn::argmax_lowest(row_t);
  }
  const auto expect = rl::double_q_targets(r, term, qo, qt, 5, 0.9);
  const auto got = learner.targets(batch);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-6));
  CHECK(disagree);
}

TEST_CASE("target network syncs only on multiples of the period") {
  const auto net = tiny_net();
  const std::uint64_t period = 7;
  rl::Learner learner(net, {.lr = 1e-3, .target_sync = period}, 3);
  const auto batch = scene_transitions(net, 8, 9);
  const std::vector<double> w(batch.size(), 1.0), y(batch.size(), 0.5);
  const auto frozen = snapshot(learner.target());
  for (std::uint64_t step = 1; step < period; ++step) {
    learner.train_step(batch, y, w);
    CHECK_FALSE(learner.sync_target(learner.grad_steps()));
    CHECK(snapshot(learner.target()) == frozen);
  }
  learner.train_step(batch, y, w);
  CHECK(learner.grad_steps() == period);
  CHECK(learner.sync_target(learner.grad_steps()));
  CHECK(learner.target().equal_values(learner.online()));
  learner.train_step(batch, y, w);
  CHECK_FALSE(learner.sync_target(learner.grad_steps()));
  CHECK_FALSE(learner.target().equal_values(learner.online()));
  CHECK(learner.sync_count() == 1);
}

TEST_CASE("target stays frozen across 100 train steps between syncs") {
  const auto net = tiny_net();
  rl::Learner learner(net, {.lr = 1e-3, .target_sync = 1000}, 5);
  const auto batch = scene_transitions(net, 4, 2);
  const std::vector<double> w(batch.size(), 1.0), y(batch.size(), -1.0);
  const auto frozen = snapshot(learner.target());
  const auto before = snapshot(learner.online());
  for (int i = 0; i < 100; ++i) {
    learner.train_step(batch, y, w);
    learner.sync_target(learner.grad_steps());
  }
  CHECK(snapshot(learner.target()) == frozen);
  CHECK(snapshot(learner.online()) != before);
}

TEST_CASE("regression on a fixed batch with gamma zero converges") {
  const auto net = tiny_net(0.0);
  rl::Learner learner(net, {.gamma = 0.0, .lr = 3e-3, .target_sync = 50}, 17);
  auto batch = scene_transitions(net, 8, 6);
  REQUIRE(batch.size() == 8);
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i].reward = static_cast<float>(0.1 * i - 0.3);
  const std::vector<double> w(batch.size(), 1.0);
  double loss = 1.0;
  for (int i = 0; i < 600 && loss >= 1e-3; ++i) {
    const auto y = learner.targets(batch);
    for (std::size_t k = 0; k < y.size(); ++k) REQUIRE(y[k] == doctest::Approx(batch[k].reward));
    loss = learner.train_step(batch, y, w).loss;
  }
  CHECK(loss < 1e-3);
}

TEST_CASE("non-finite loss aborts without touching parameters") {
  const auto net = tiny_net();
  rl::Learner learner(net, {}, 1);
  const auto batch = scene_transitions(net, 3, 1);
  const auto before = snapshot(learner.online());
  const std::vector<double> w(batch.size(), 1.0);
  std::vector<double> y(batch.size(), 0.0);
  y[1] = std::nan("");
  CHECK_THROWS_AS(learner.train_step(batch, y, w), rl::NonFiniteLoss);
  CHECK(snapshot(learner.online()) == before);
}

TEST_CASE("learner update refreshes priorities of the sampled leaves") {
  const auto net = tiny_net();
  rl::Learner learner(net, {}, 2);
  rl::ReplayBuffer buf(rl::PerConfig{.capacity = 64});
  for (auto& t : scene_transitions(net, 20, 3)) buf.push(t);
  std::mt19937_64 rng(0);
  const auto batch = buf.sample(8, 0.4, rng);
  const auto res = learner.update(buf, batch);
  REQUIRE(res.priorities.size() == 8);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(res.priorities[k] > 0.0);
    CHECK(res.priorities[k] == doctest::Approx(std::abs(res.td[k]) + 1e-3));
  }
  CHECK(buf.leaf_priority(batch.ids.back()) == doctest::Approx(std::pow(res.priorities.back(), 0.6)));
}

TEST_CASE("training episode seeds stay below the evaluation range") {
  for (std::uint64_t e = 0; e < 1000; ++e) CHECK(rl::training_episode_seed(123, e % 5, e) < rl::kEvalSeedFloor);
  CHECK(rl::training_episode_seed(1, 0, 0) != rl::training_episode_seed(1, 1, 0));
  rl::TrainerConfig c;
  c.seed = rl::kEvalSeedFloor;
  CHECK_THROWS(c.validate());
}

TEST_CASE("every episode end is terminal unless timeouts are bootstrapped") {
  CHECK_FALSE(rl::TrainerConfig{}.bootstrap_timeouts);
  sim::Events e;
  e.collision = true;
  CHECK(rl::stored_terminal(e, true));
  e = {};
  e.success = true;
  CHECK(rl::stored_terminal(e, true));
  e = {};
  e.jam_timeout = true;
  CHECK_FALSE(rl::stored_terminal(e, true));
  CHECK(rl::stored_terminal(e, false));
  e = {};
  e.step_timeout = true;
  CHECK_FALSE(rl::stored_terminal(e, true));
  CHECK(rl::stored_terminal(e, false));
  CHECK_FALSE(rl::stored_terminal({}, false));
}

TEST_CASE("trainer config round trips through json") {
  auto c = tiny_trainer(3, 77);
  c.learner.gamma = 0.95;
  c.bootstrap_timeouts = true;
  const auto back = rl::TrainerConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(back.scenarios == c.scenarios);
  CHECK(back.bootstrap_timeouts);
  CHECK_THROWS(rl::TrainerConfig::from_json(R"({"bogus": 1})"));
  CHECK_THROWS(rl::TrainerConfig::from_json(R"({"workers": 0})"));
  CHECK(rl::parse_scenario_set("junctions").size() == 12);
  CHECK_THROWS(rl::parse_scenario_set("t_merge,,int_left"));
}

TEST_CASE("single-worker training is bit-reproducible") {
  const auto cfg = tiny_trainer(1, 7);
  const auto a = rl::run_async_training(cfg);
  const auto b = rl::run_async_training(cfg);
  REQUIRE(a.log.size() == 3);
  CHECK(a.log == b.log);
  CHECK(a.learner->online().equal_values(b.learner->online()));
  CHECK(a.learner->target().equal_values(b.learner->target()));
  CHECK(a.log.back().grad_steps == 12);
  CHECK(a.log.back().sync_count == 2);
  CHECK(a.log.back().env_steps == 600);
  const auto c = rl::run_async_training(tiny_trainer(1, 8));
  CHECK_FALSE(a.learner->online().equal_values(c.learner->online()));
}

TEST_CASE("four workers push exactly the transitions they count") {
  const auto cfg = tiny_trainer(4, 3);
  const auto r = rl::run_async_training(cfg);
  std::uint64_t counted = 0;
  for (auto n : r.worker_pushed) counted += n;
  CHECK(r.worker_pushed.size() == 4);
  CHECK(counted == r.buffer_pushed);
  CHECK(counted == cfg.total_steps);
  CHECK(r.log.back().buffer_size == counted);
}

TEST_CASE("a crashing worker is restarted and training continues") {
  auto cfg = tiny_trainer(2, 5);
  cfg.fault_every = 97;
  std::vector<std::string> errors;
  rl::TrainerHooks hooks;
  hooks.on_error = [&](const std::string& e) { errors.push_back(e); };
  const auto r = rl::run_async_training(cfg, {}, hooks);
  CHECK(r.worker_restarts > 0);
  CHECK(errors.size() == r.worker_restarts);
  CHECK(errors.front().find("injected worker fault") != std::string::npos);
  CHECK(r.env_steps == cfg.total_steps);
  CHECK(r.buffer_pushed == cfg.total_steps);
}

TEST_CASE("trainer writes a log, config and checkpoint") {
  auto cfg = tiny_trainer(1, 9);
  cfg.checkpoint_every = 2;
  const auto dir = std::filesystem::temp_directory_path() / "dqgat_test_trainer";
  std::filesystem::remove_all(dir);
  const auto r = rl::run_async_training(cfg, dir);
  CHECK(std::filesystem::exists(dir / "final.ckpt"));
  CHECK(std::filesystem::exists(dir / "checkpoint_400.ckpt"));
  CHECK(rl::TrainerConfig::from_json(
            [&] {
              std::ifstream in(dir / "config.json");
              return std::string(std::istreambuf_iterator<char>(in), {});
            }())
            .hash() == cfg.hash());
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(log, line)) {
    CHECK(rl::TrainLogRecord::from_json(line) == r.log[n]);
    ++n;
  }
  CHECK(n == r.log.size());
  std::filesystem::remove_all(dir);
}
