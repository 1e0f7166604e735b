#include "mergeflow/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mergeflow/scenario.hpp"

namespace mergeflow {

RewardScope reward_scope_from_string(const std::string& s) {
  if (s == "zone") return RewardScope::Zone;
  if (s == "approach") return RewardScope::Approach;
  throw std::invalid_argument("unknown reward scope: " + s);
}

const char* to_string(RewardScope s) {
  return s == RewardScope::Zone ? "zone" : "approach";
}

void DecPomdpConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("DecPomdpConfig: gamma outside [0,1]");
  if (eta_min >= eta_max)
    throw std::invalid_argument("DecPomdpConfig: eta_min must be < eta_max");
  if (action_bins < 2)
    throw std::invalid_argument("DecPomdpConfig: action_bins < 2");
  if (time_penalty < 0.0)
    throw std::invalid_argument("DecPomdpConfig: time_penalty < 0");
  if (v_ref <= 0.0 || count_cap <= 0.0)
    throw std::invalid_argument("DecPomdpConfig: bad normalizers");
  if (horizon < 1) throw std::invalid_argument("DecPomdpConfig: horizon < 1");
}

ActionSpec ActionSpec::linear(const DecPomdpConfig& cfg) {
  ActionSpec spec;
  spec.bins.resize(cfg.action_bins);
  const double step = (cfg.eta_max - cfg.eta_min) / (cfg.action_bins - 1);
  for (int i = 0; i < cfg.action_bins; ++i)
    spec.bins[i] = cfg.eta_min + i * step;
  spec.bins.front() = cfg.eta_min;
  spec.bins.back() = cfg.eta_max;
  return spec;
}

double ActionSpec::accel(int bin_index) const {
  if (bin_index < 0 || bin_index >= size())
    throw std::out_of_range("ActionSpec: bin index " +
                            std::to_string(bin_index) + " outside [0," +
                            std::to_string(size()) + ")");
  return bins[bin_index];
}

double shared_reward(const Simulation& sim, const DecPomdpConfig& cfg) {
  double v_b = 0.0;
  if (cfg.reward_scope == RewardScope::Zone) {
    v_b = sim.zone_mean_speed();
  } else {
    double sum = 0.0;
    std::size_t n = sim.queue_size();  // queued arrivals stand at speed 0
    for (const auto& lane : sim.lanes())
      for (const Vehicle& v : lane) {
        sum += v.speed;
        ++n;
      }
    v_b = n == 0 ? 0.0 : sum / static_cast<double>(n);
  }
  return v_b / cfg.v_ref - cfg.time_penalty;
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  double sum = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    sum += g * r;
    g *= gamma;
  }
  return sum;
}

Environment::Environment(const ScenarioConfig& cfg, std::uint64_t seed)
    : cfg_(cfg.env), spec_(), sim_(make_simulation(cfg, seed)) {
  cfg_.horizon = cfg.horizon;
  cfg_.validate();
  spec_ = ActionSpec::linear(cfg_);
}

int Environment::obs_dim() const {
  const RoadNetwork& net = sim_.network();
  return 2 + net.edge_count * net.lane_count;
}

Observation Environment::build_observation(const Vehicle& av,
                                           const Simulation& sim,
                                           const DecPomdpConfig& cfg) {
  return build_observation(av, sim, cfg, sim.count_vehicles());
}

Observation Environment::build_observation(
    const Vehicle& av, const Simulation& sim, const DecPomdpConfig& cfg,
    const std::vector<std::vector<int>>& counts) {
  const RoadNetwork& net = sim.network();
  if (av.position < net.zone_start() || av.position > net.exit_position())
    throw std::invalid_argument("build_observation: AV outside coordination zone");
  Observation o;
  o.values.reserve(2 + static_cast<std::size_t>(net.edge_count) * net.lane_count);
  o.values.push_back(av.speed / 12.0);
  o.values.push_back((net.exit_position() - av.position) /
                     net.coordination_zone_length);
  for (int e = 0; e < net.edge_count; ++e)
    for (int l = 0; l < net.lane_count; ++l)
      o.values.push_back(std::min(static_cast<double>(counts[e][l]), cfg.count_cap) /
                         cfg.count_cap);
  return o;
}

Observation Environment::observe(std::int64_t agent_id) const {
  const Vehicle* v = sim_.find(agent_id);
  if (!v) throw std::invalid_argument("observe: unknown agent id");
  if (!counts_.empty()) return build_observation(*v, sim_, cfg_, counts_);
  return build_observation(*v, sim_, cfg_);
}

std::set<std::int64_t> Environment::scan_controlled() const {
  std::set<std::int64_t> ids;
  const RoadNetwork& net = sim_.network();
  for (const auto& lane : sim_.lanes()) {
    for (const Vehicle& v : lane) {
      if (v.kind == VehicleKind::Av && v.position >= net.zone_start() &&
          v.position < net.exit_position())
        ids.insert(v.id);
    }
  }
  return ids;
}

StepResult Environment::reset() {
  StepResult r;
  r.reward = 0.0;
  r.done = done();
  counts_ = sim_.count_vehicles();
  controlled_ = scan_controlled();
  for (std::int64_t id : controlled_) {
    r.obs.emplace(id, observe(id));
    r.entered.push_back(id);
  }
  return r;
}

StepResult Environment::step(const std::map<std::int64_t, int>& actions) {
  if (done()) throw std::logic_error("Environment::step called after done");
  // Exact cover check: every controlled agent acts, nobody else does.
  std::vector<std::int64_t> missing, extra;
  for (std::int64_t id : controlled_)
    if (!actions.count(id)) missing.push_back(id);
  for (const auto& [id, bin] : actions)
    if (!controlled_.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::ostringstream msg;
    msg << "env_step: action map mismatch;";
    if (!missing.empty()) {
      msg << " missing:";
      for (auto id : missing) msg << ' ' << id;
    }
    if (!extra.empty()) {
      msg << " extra:";
      for (auto id : extra) msg << ' ' << id;
    }
    throw std::invalid_argument(msg.str());
  }

  std::map<std::int64_t, double> accels;
  for (const auto& [id, bin] : actions) accels[id] = spec_.accel(bin);
  sim_.step(accels);
  ++steps_;
  counts_ = sim_.count_vehicles();

  StepResult result;
  std::set<std::int64_t> now = scan_controlled();
  for (std::int64_t id : now)
    if (!controlled_.count(id)) result.entered.push_back(id);
  for (std::int64_t id : controlled_)
    if (!now.count(id)) result.exited.push_back(id);
  controlled_ = std::move(now);
  for (std::int64_t id : controlled_) result.obs.emplace(id, observe(id));
  result.reward = shared_reward(sim_, cfg_);
  result.done = done();
  return result;
}

}  // namespace mergeflow
