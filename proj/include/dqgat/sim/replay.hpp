#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dqgat/sim/world.hpp"

namespace dqgat::sim {

/// One vehicle at one step of an episode log.
struct ReplayRecord {
  int t = 0;  // step index; 0 is the spawned state
  int vehicle_id = 0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
  double a = 0.0;
  double w = 0.0;
  double l = 0.0;
  int ego_action = -1;  // action that produced this step, -1 at t = 0
  double reward = 0.0;
  Events events;
};

struct ReplayHeader {
  ScenarioConfig config;
  std::string policy;
  std::string checkpoint_hash;
  int trial = -1;    // benchmark trial index, -1 outside benchmarks
  int attempt = 0;   // jam recount number within the trial
};

struct ReplayFrame {
  int t = 0;
  int ego_action = -1;
  double reward = 0.0;
  Events events;
  std::vector<VehicleState> vehicles;  // ego first; route and s are not logged
};

/// JSON-lines episode log: a header line, then one line per vehicle per step.
class ReplayWriter {
 public:
  ReplayWriter(const std::filesystem::path& path, const ReplayHeader& header);
  void write_initial(const World& world);
  void write_step(const StepOutcome& outcome, std::size_t action);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  void write_vehicles(int t, const std::vector<VehicleState>& vehicles, int action, double reward, const Events& ev);
};

struct Replay {
  ReplayHeader header;
  std::vector<ReplayRecord> records;

  std::vector<ReplayFrame> frames() const;
};

Replay read_replay(const std::filesystem::path& path);

}  // namespace dqgat::sim
