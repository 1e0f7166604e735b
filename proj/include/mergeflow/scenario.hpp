#pragma once

#include <cstdint>
#include <string>

#include "mergeflow/env.hpp"
#include "mergeflow/idm.hpp"
#include "mergeflow/ppo.hpp"
#include "mergeflow/traffic.hpp"

namespace mergeflow {

// Inflow drawn per episode: a fresh piecewise-constant schedule with segment
// rates uniform in [min_rate, max_rate], resolved from the episode seed.
struct RandomInflow {
  bool enabled = false;
  double min_rate = 0.0;
  double max_rate = 4000.0;
  double segment = 600.0;  // s
};

// Full experiment description; serializes to/from JSON.
struct ScenarioConfig {
  std::string name = "scenario";
  RoadNetwork network;
  IdmParams idm;
  double hdv_speed = 10.0;
  double av_speed = 12.0;
  double vehicle_length = 5.0;
  InflowProcess inflow;
  RandomInflow random_inflow;
  double dt = 1.0;
  int horizon = 700;  // steps
  std::uint64_t seed = 1;
  DecPomdpConfig env;
  TrainConfig train;

  int obs_dim() const { return 2 + network.edge_count * network.lane_count; }
  void validate() const;

  std::string to_json() const;  // resolved, round-trippable
  static ScenarioConfig from_json(const std::string& text);
  static ScenarioConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

// Simulation for one episode of this scenario. Resolves random inflow from
// the seed, then hands the simulator an explicit schedule.
Simulation make_simulation(const ScenarioConfig& cfg, std::uint64_t seed);

}  // namespace mergeflow
