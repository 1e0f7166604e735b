#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mergeflow/traffic.hpp"

namespace mergeflow {

struct ScenarioConfig;

// Which vehicles enter the reward's mean speed v_b. Zone is the coordination
// zone only; Approach adds the free zone and spawn queue (at speed 0), which
// closes the exploit of parking at the zone entrance to keep slow traffic out
// of the average.
enum class RewardScope { Zone, Approach };

RewardScope reward_scope_from_string(const std::string& s);
const char* to_string(RewardScope s);

struct DecPomdpConfig {
  double gamma = 0.9;
  int horizon = 700;          // tau, steps
  double eta_min = -5.0;      // m/s^2
  double eta_max = 2.5;       // m/s^2
  int action_bins = 11;
  double time_penalty = 1.0;  // c, reward units per step
  double v_ref = 10.0;        // m/s
  double count_cap = 50.0;    // per-cell normalizer for observation counts
  RewardScope reward_scope = RewardScope::Zone;

  void validate() const;
};

// Per-AV observation: [own speed, distance to exit, edge x lane counts],
// all normalized to [0,1].
struct Observation {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

struct ActionSpec {
  std::vector<double> bins;  // accelerations, ascending, eta_min..eta_max

  static ActionSpec linear(const DecPomdpConfig& cfg);
  double accel(int bin_index) const;  // throws on out-of-range index
  int size() const { return static_cast<int>(bins.size()); }
};

struct StepResult {
  std::map<std::int64_t, Observation> obs;  // currently controlled AVs
  double reward = 0.0;                      // shared by all agents
  bool done = false;
  std::vector<std::int64_t> entered;  // newly controlled this step
  std::vector<std::int64_t> exited;   // released this step
};

// Shared reward r = v_b / v_ref - c, with v_b the mean speed of all vehicles
// inside the coordination zone (0 when empty).
double shared_reward(const Simulation& sim, const DecPomdpConfig& cfg);

double discounted_return(const std::vector<double>& rewards, double gamma);

// Dec-POMDP wrapper over the simulator: AVs inside the coordination zone form
// the controlled set; each env step maps action bins to accelerations,
// advances the simulation and reports entered/released agents.
class Environment {
 public:
  Environment(const ScenarioConfig& cfg, std::uint64_t seed);

  // Initial result: empty road, no controlled agents.
  StepResult reset();

  // `actions` must cover exactly the currently controlled agent set.
  StepResult step(const std::map<std::int64_t, int>& actions);

  Observation observe(std::int64_t agent_id) const;
  static Observation build_observation(const Vehicle& av, const Simulation& sim,
                                       const DecPomdpConfig& cfg);
  // As build_observation but reusing an already-computed count matrix.
  static Observation build_observation(const Vehicle& av, const Simulation& sim,
                                       const DecPomdpConfig& cfg,
                                       const std::vector<std::vector<int>>& counts);

  const std::set<std::int64_t>& controlled() const { return controlled_; }
  const Simulation& sim() const { return sim_; }
  const DecPomdpConfig& config() const { return cfg_; }
  const ActionSpec& actions() const { return spec_; }
  int steps() const { return steps_; }
  bool done() const { return steps_ >= cfg_.horizon; }
  int obs_dim() const;

 private:
  std::set<std::int64_t> scan_controlled() const;

  DecPomdpConfig cfg_;
  ActionSpec spec_;
  Simulation sim_;
  std::set<std::int64_t> controlled_;
  std::vector<std::vector<int>> counts_;  // refreshed once per step
  int steps_ = 0;
};

}  // namespace mergeflow
