#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dqgat/agents/dqgat.hpp"
#include "dqgat/agents/fsm_ttc.hpp"
#include "dqgat/eval/benchmark.hpp"
#include "dqgat/eval/introspect.hpp"
#include "dqgat/nn/checkpoint.hpp"
#include "dqgat/rl/trainer.hpp"

namespace py = pybind11;
using namespace dqgat;

namespace {

py::dict vehicle_dict(const sim::VehicleState& v) {
  py::dict d;
  d["id"] = v.id;
  d["x"] = v.x;
  d["y"] = v.y;
  d["psi"] = v.psi;
  d["v"] = v.v;
  d["a"] = v.a;
  d["w"] = v.w;
  d["l"] = v.l;
  d["route"] = v.route;
  d["s"] = v.s;
  return d;
}

py::dict events_dict(const sim::Events& e) {
  py::dict d;
  d["collision"] = e.collision;
  d["success"] = e.success;
  d["jam_timeout"] = e.jam_timeout;
  d["step_timeout"] = e.step_timeout;
  return d;
}

py::array_t<float> bev_array(const obs::Observation& o) {
  const auto grid = obs::decompress(o.bev);
  py::array_t<float> arr({grid.channels, grid.rows, grid.cols});
  auto* p = arr.mutable_data();
  for (std::size_t i = 0; i < grid.data.size(); ++i) p[i] = static_cast<float>(grid.value(i));
  return arr;
}

py::array_t<float> node_array(const obs::Observation& o) {
  const std::size_t n = o.nodes.features.size();
  py::array_t<float> arr({n, obs::kFeatureDim});
  auto* p = arr.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < obs::kFeatureDim; ++k) p[i * obs::kFeatureDim + k] = static_cast<float>(o.nodes.features[i][k]);
  }
  return arr;
}

py::dict cell_dict(const eval::CellReport& c) {
  py::dict d;
  d["scenario"] = sim::to_string(c.scenario);
  d["density"] = sim::to_string(c.density);
  d["agent"] = c.agent;
  d["trials"] = c.trials;
  d["successes"] = c.successes;
  d["collisions"] = c.collisions;
  d["jams"] = c.jams;
  d["timeouts"] = c.timeouts;
  d["jam_recounts"] = c.jam_recounts;
  d["success_rate"] = c.success_rate;
  d["ct_mean"] = c.ct_mean ? py::cast(*c.ct_mean) : py::none();
  d["ct_std"] = c.ct_std ? py::cast(*c.ct_std) : py::none();
  return d;
}

class PyPolicy {
 public:
  explicit PyPolicy(std::unique_ptr<agents::Policy> p) : p_(std::move(p)) {}
  std::string name() const { return p_->name(); }
  void reset(const sim::World& w, std::uint64_t seed) { p_->reset(w, seed); }
  std::size_t act(const sim::World& w) { return p_->act(w); }

 private:
  std::unique_ptr<agents::Policy> p_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Desk-scale DQ-GAT driving stack: simulator, observations, agents, training and evaluation";

  m.attr("ACTION_SPEEDS_KMH") = std::vector<double>(sim::kActionSpeedsKmh.begin(), sim::kActionSpeedsKmh.end());
  m.attr("EVAL_SEED_FLOOR") = rl::kEvalSeedFloor;
  m.def("scenarios", [] {
    std::vector<std::string> out;
    for (auto id : sim::junction_scenarios()) out.push_back(sim::to_string(id));
    out.push_back(sim::to_string(sim::ScenarioId::kStoppedLead));
    return out;
  });
  m.def("reward", [](bool collision, double speed_kmh) {
    sim::Events e;
    e.collision = collision;
    return sim::reward(e, speed_kmh);
  }, py::arg("collision"), py::arg("speed_kmh"));

  py::class_<sim::ScenarioConfig>(m, "ScenarioConfig")
      .def_static("make", [](const std::string& scenario, const std::string& density, std::uint64_t seed) {
        return sim::ScenarioConfig::make(sim::parse_scenario(scenario), sim::parse_density(density), seed);
      }, py::arg("scenario"), py::arg("density") = "regular", py::arg("seed") = 0)
      .def_static("from_text", &sim::ScenarioConfig::from_text)
      .def("to_text", &sim::ScenarioConfig::to_text)
      .def_readwrite("seed", &sim::ScenarioConfig::seed)
      .def_readwrite("max_steps", &sim::ScenarioConfig::max_steps)
      .def_readwrite("vehicle_count_min", &sim::ScenarioConfig::vehicle_count_min)
      .def_readwrite("vehicle_count_max", &sim::ScenarioConfig::vehicle_count_max);

  py::class_<sim::World>(m, "World")
      .def(py::init(&sim::spawn_scenario), py::arg("config"))
      .def("step", [](sim::World& w, std::size_t action) {
        const sim::StepOutcome out = w.step(action);
        return py::make_tuple(out.reward, events_dict(out.events));
      }, py::arg("action"))
      .def_property_readonly("vehicles", [](const sim::World& w) {
        py::list l;
        for (const auto& v : w.vehicles()) l.append(vehicle_dict(v));
        return l;
      })
      .def_property_readonly("ego", [](const sim::World& w) { return vehicle_dict(w.ego()); })
      .def_property_readonly("step_count", &sim::World::step_count)
      .def_property_readonly("time", &sim::World::time)
      .def_property_readonly("terminal", &sim::World::terminal)
      .def_property_readonly("events", [](const sim::World& w) { return events_dict(w.last_events()); })
      .def_property_readonly("distance_to_goal", &sim::World::distance_to_goal);

  py::class_<obs::Observation>(m, "Observation")
      .def_property_readonly("bev", &bev_array)
      .def_property_readonly("nodes", &node_array)
      .def_property_readonly("node_ids", [](const obs::Observation& o) { return o.nodes.ids; });
  m.def("observe", [](const sim::World& w, std::size_t rows, std::size_t cols, std::size_t max_nodes) {
    nn::QNetConfig c;
    c.bev_rows = rows;
    c.bev_cols = cols;
    c.max_nodes = max_nodes;
    return obs::observe(w, obs::ObsConfig::for_network(c));
  }, py::arg("world"), py::arg("rows") = 100, py::arg("cols") = 140, py::arg("max_nodes") = 16);

  py::class_<PyPolicy>(m, "Policy")
      .def_property_readonly("name", &PyPolicy::name)
      .def("reset", &PyPolicy::reset, py::arg("world"), py::arg("episode_seed") = 0)
      .def("act", &PyPolicy::act, py::arg("world"));
  m.def("make_policy", [](const std::string& name, std::optional<std::string> checkpoint) {
    std::optional<std::filesystem::path> p;
    if (checkpoint) p = *checkpoint;
    return PyPolicy(agents::make_policy(name, p));
  }, py::arg("name"), py::arg("checkpoint") = py::none());
  m.def("ttc", py::overload_cast<double, double>(&agents::ttc), py::arg("gap"), py::arg("closing_speed"));

  py::class_<nn::QNetwork<float>>(m, "QNetwork")
      .def_static("load", [](const std::string& path) {
        return nn::network_from_checkpoint(nn::load_checkpoint(path));
      })
      .def_property_readonly("config_json", [](const nn::QNetwork<float>& n) { return n.config().to_json(); })
      .def_property_readonly("parameter_count", [](const nn::QNetwork<float>& n) { return n.params().total_values(); })
      .def("q_values", [](const nn::QNetwork<float>& n, const obs::Observation& o) {
        const auto out = n.forward(obs::make_input(o, n.config()), nn::Mode::kEval);
        return std::vector<float>(out.q.data().begin(), out.q.data().end());
      })
      .def("observe", [](const nn::QNetwork<float>& n, const sim::World& w) {
        return obs::observe(w, obs::ObsConfig::for_network(n.config()));
      })
      .def("saliency", [](const nn::QNetwork<float>& n, const obs::Observation& o) {
        const auto s = eval::saliency(n, o);
        py::array_t<double> arr({s.channels, s.rows, s.cols});
        std::copy(s.normalized.begin(), s.normalized.end(), arr.mutable_data());
        return arr;
      })
      .def("attention", [](const nn::QNetwork<float>& n, const obs::Observation& o) {
        const auto r = eval::attention_report(n, o);
        return py::make_tuple(r.node_ids, r.alpha);
      });

  py::class_<rl::ReplayBuffer>(m, "ReplayBuffer")
      .def(py::init([](std::size_t capacity, double alpha) {
        return std::make_unique<rl::ReplayBuffer>(rl::PerConfig{.capacity = capacity, .alpha = alpha});
      }), py::arg("capacity"), py::arg("alpha") = 0.6)
      .def("push_reward", [](rl::ReplayBuffer& b, float r) {
        rl::Transition t;
        t.reward = r;
        return b.push(std::move(t));
      })
      .def("update_priorities", [](rl::ReplayBuffer& b, std::vector<std::size_t> ids, std::vector<double> p) {
        b.update_priorities(ids, p);
      })
      .def("sample_ids", [](const rl::ReplayBuffer& b, std::size_t n, double beta, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const auto s = b.sample(n, beta, rng);
        return py::make_tuple(s.ids, s.weights);
      }, py::arg("n"), py::arg("beta") = 0.4, py::arg("seed") = 0)
      .def("__len__", &rl::ReplayBuffer::size)
      .def_property_readonly("total_priority", &rl::ReplayBuffer::total_priority);

  m.def("double_q_targets", [](std::vector<double> r, std::vector<std::uint8_t> term, std::vector<double> qo,
                               std::vector<double> qt, std::size_t actions, double gamma) {
    return rl::double_q_targets(r, term, qo, qt, actions, gamma);
  });

  m.def("train", [](const std::string& config_json, const std::string& out_dir) {
    const auto cfg = rl::TrainerConfig::from_json(config_json);
    std::vector<std::string> log;
    {
      py::gil_scoped_release release;
      const auto result = rl::run_async_training(cfg, out_dir);
      for (const auto& r : result.log) log.push_back(r.to_json());
    }
    return log;
  }, py::arg("config_json"), py::arg("out_dir"));

  m.def("benchmark", [](const std::string& agent, std::vector<std::string> scenarios, std::vector<std::string> densities,
                        int trials, std::uint64_t seed_base, std::optional<std::string> checkpoint,
                        std::optional<int> vehicle_count) {
    eval::BenchmarkConfig cfg;
    cfg.agent = agent;
    cfg.scenarios.clear();
    for (const auto& s : scenarios) cfg.scenarios.push_back(sim::parse_scenario(s));
    cfg.densities.clear();
    for (const auto& d : densities) cfg.densities.push_back(sim::parse_density(d));
    cfg.trials = trials;
    cfg.seed_base = seed_base;
    if (checkpoint) cfg.checkpoint = *checkpoint;
    cfg.vehicle_count = vehicle_count;
    eval::BenchmarkReport report;
    {
      py::gil_scoped_release release;
      report = eval::run_benchmark(cfg);
    }
    py::list cells;
    for (const auto& c : report.cells) cells.append(cell_dict(c));
    return py::make_tuple(cells, report.table());
  }, py::arg("agent"), py::arg("scenarios") = std::vector<std::string>{"t_merge"},
     py::arg("densities") = std::vector<std::string>{"regular"}, py::arg("trials") = 100,
     py::arg("seed_base") = rl::kEvalSeedFloor, py::arg("checkpoint") = py::none(),
     py::arg("vehicle_count") = py::none());
}
