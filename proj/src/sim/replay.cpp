#include "dqgat/sim/replay.hpp"

#include <stdexcept>

#include "json.hpp"

namespace dqgat::sim {

using nlohmann::json;

ReplayWriter::ReplayWriter(const std::filesystem::path& path, const ReplayHeader& header) : out_(path) {
  if (!out_) throw std::runtime_error("cannot write replay " + path.string());
  json h = {{"type", "header"},
            {"config", header.config.to_text()},
            {"policy", header.policy},
            {"checkpoint_hash", header.checkpoint_hash},
            {"trial", header.trial},
            {"attempt", header.attempt}};
  out_ << h.dump() << '\n';
}

void ReplayWriter::write_vehicles(int t, const std::vector<VehicleState>& vehicles, int action, double reward,
                                  const Events& ev) {
  for (const auto& v : vehicles) {
    json r = {{"t", t},       {"vehicle_id", v.id}, {"x", v.x}, {"y", v.y},
              {"psi", v.psi}, {"v", v.v},           {"a", v.a}, {"w", v.w},
              {"l", v.l},     {"ego_action", action}, {"reward", reward}, {"events", ev.names()}};
    out_ << r.dump() << '\n';
  }
}

void ReplayWriter::write_initial(const World& world) { write_vehicles(0, world.vehicles(), -1, 0.0, {}); }

void ReplayWriter::write_step(const StepOutcome& outcome, std::size_t action) {
  write_vehicles(outcome.step, outcome.vehicles, static_cast<int>(action), outcome.reward, outcome.events);
}

std::vector<ReplayFrame> Replay::frames() const {
  std::vector<ReplayFrame> out;
  for (const auto& r : records) {
    if (out.empty() || out.back().t != r.t) {
      ReplayFrame f;
      f.t = r.t;
      f.ego_action = r.ego_action;
      f.reward = r.reward;
      f.events = r.events;
      out.push_back(std::move(f));
    }
    VehicleState v;
    v.id = r.vehicle_id;
    v.x = r.x;
    v.y = r.y;
    v.psi = r.psi;
    v.v = r.v;
    v.a = r.a;
    v.w = r.w;
    v.l = r.l;
    out.back().vehicles.push_back(v);
  }
  return out;
}

Replay read_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay " + path.string());
  Replay rep;
  std::string line;
  bool have_header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("replay line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("type", "") != "header") throw std::runtime_error("replay is missing its header line");
      rep.header.config = ScenarioConfig::from_text(j.at("config").get<std::string>());
      rep.header.policy = j.value("policy", "");
      rep.header.checkpoint_hash = j.value("checkpoint_hash", "");
      rep.header.trial = j.value("trial", -1);
      rep.header.attempt = j.value("attempt", 0);
      have_header = true;
      continue;
    }
    ReplayRecord r;
    r.t = j.at("t").get<int>();
    r.vehicle_id = j.at("vehicle_id").get<int>();
    r.x = j.at("x").get<double>();
    r.y = j.at("y").get<double>();
    r.psi = j.at("psi").get<double>();
    r.v = j.at("v").get<double>();
    r.a = j.at("a").get<double>();
    r.w = j.at("w").get<double>();
    r.l = j.at("l").get<double>();
    r.ego_action = j.at("ego_action").get<int>();
    r.reward = j.at("reward").get<double>();
    r.events = Events::from_names(j.at("events").get<std::vector<std::string>>());
    rep.records.push_back(r);
  }
  if (!have_header) throw std::runtime_error("replay " + path.string() + " is empty");
  return rep;
}

}  // namespace dqgat::sim
