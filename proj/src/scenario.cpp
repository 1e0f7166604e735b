#include "mergeflow/scenario.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mergeflow {

using nlohmann::json;

void ScenarioConfig::validate() const {
  RoadNetwork net = network;
  if (net.edges.empty()) net.build_edges();
  net.validate();
  idm.validate();
  inflow.validate();
  env.validate();
  train.ppo.validate();
  if (dt <= 0) throw std::invalid_argument("ScenarioConfig: dt must be positive");
  if (horizon < 1) throw std::invalid_argument("ScenarioConfig: horizon < 1");
  if (hdv_speed <= 0 || av_speed <= 0 || vehicle_length <= 0)
    throw std::invalid_argument("ScenarioConfig: bad vehicle parameters");
  if (train.pool_slots < 1)
    throw std::invalid_argument("ScenarioConfig: pool_slots < 1");
  if (train.pool_mode == PoolMode::SharedPolicy && train.pool_slots != 1)
    throw std::invalid_argument("ScenarioConfig: shared pool has exactly 1 slot");
  if (random_inflow.enabled) {
    if (random_inflow.min_rate < 0 ||
        random_inflow.max_rate < random_inflow.min_rate ||
        random_inflow.segment <= 0)
      throw std::invalid_argument("ScenarioConfig: bad random inflow");
  }
}

std::string ScenarioConfig::to_json() const {
  json j;
  j["name"] = name;
  j["geometry"] = {{"free_zone_length", network.free_zone_length},
                   {"coordination_zone_length", network.coordination_zone_length},
                   {"merge_point", network.merge_point},
                   {"merge_window", network.merge_window},
                   {"merge_yield", network.merge_yield},
                   {"yield_margin", network.yield_margin},
                   {"edges", network.edge_count},
                   {"lanes", network.lane_count}};
  j["idm"] = {{"time_headway", idm.time_headway},
              {"min_gap", idm.min_gap},
              {"max_accel", idm.max_accel},
              {"comfortable_decel", idm.comfortable_decel},
              {"exponent", idm.exponent}};
  j["vehicles"] = {{"hdv_speed", hdv_speed},
                   {"av_speed", av_speed},
                   {"length", vehicle_length}};
  json inflow_j;
  json sched = json::array();
  for (const RateSegment& s : inflow.schedule)
    sched.push_back({{"t", s.t_start}, {"rate", s.rate}});
  inflow_j["schedule"] = sched;
  inflow_j["penetration"] = inflow.penetration;
  inflow_j["fixed_av_count"] = inflow.fixed_av_count;
  inflow_j["warmup"] = inflow.warmup;
  if (random_inflow.enabled) {
    inflow_j["random"] = {{"min_rate", random_inflow.min_rate},
                          {"max_rate", random_inflow.max_rate},
                          {"segment", random_inflow.segment}};
  }
  j["inflow"] = inflow_j;
  j["dt"] = dt;
  j["horizon"] = horizon;
  j["seed"] = seed;
  j["env"] = {{"gamma", env.gamma},
              {"eta_min", env.eta_min},
              {"eta_max", env.eta_max},
              {"action_bins", env.action_bins},
              {"time_penalty", env.time_penalty},
              {"v_ref", env.v_ref},
              {"count_cap", env.count_cap},
              {"reward_scope", to_string(env.reward_scope)}};
  j["train"] = {{"hidden", train.hidden},
                {"episodes_per_update", train.episodes_per_update},
                {"sweeps", train.sweeps},
                {"pool_mode", to_string(train.pool_mode)},
                {"pool_slots", train.pool_slots},
                {"eval_episodes", train.eval_episodes},
                {"eval_greedy", train.eval_greedy},
                {"eval_each_turn", train.eval_each_turn},
                {"ppo", {{"clip", train.ppo.clip},
                         {"epochs", train.ppo.epochs},
                         {"minibatch", train.ppo.minibatch},
                         {"gae_lambda", train.ppo.gae_lambda},
                         {"vf_coef", train.ppo.vf_coef},
                         {"ent_coef", train.ppo.ent_coef},
                         {"lr", train.ppo.lr}}}};
  return j.dump(2);
}

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ScenarioConfig cfg;
  cfg.name = j.value("name", cfg.name);
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    cfg.network.free_zone_length =
        g.value("free_zone_length", cfg.network.free_zone_length);
    cfg.network.coordination_zone_length =
        g.value("coordination_zone_length", cfg.network.coordination_zone_length);
    cfg.network.merge_point = g.value("merge_point", cfg.network.merge_point);
    cfg.network.merge_window = g.value("merge_window", cfg.network.merge_window);
    cfg.network.merge_yield = g.value("merge_yield", cfg.network.merge_yield);
    cfg.network.yield_margin = g.value("yield_margin", cfg.network.yield_margin);
    cfg.network.edge_count = g.value("edges", cfg.network.edge_count);
    cfg.network.lane_count = g.value("lanes", cfg.network.lane_count);
  }
  cfg.network.build_edges();
  if (j.contains("idm")) {
    const json& i = j["idm"];
    cfg.idm.time_headway = i.value("time_headway", cfg.idm.time_headway);
    cfg.idm.min_gap = i.value("min_gap", cfg.idm.min_gap);
    cfg.idm.max_accel = i.value("max_accel", cfg.idm.max_accel);
    cfg.idm.comfortable_decel =
        i.value("comfortable_decel", cfg.idm.comfortable_decel);
    cfg.idm.exponent = i.value("exponent", cfg.idm.exponent);
  }
  if (j.contains("vehicles")) {
    const json& v = j["vehicles"];
    cfg.hdv_speed = v.value("hdv_speed", cfg.hdv_speed);
    cfg.av_speed = v.value("av_speed", cfg.av_speed);
    cfg.vehicle_length = v.value("length", cfg.vehicle_length);
  }
  if (j.contains("inflow")) {
    const json& f = j["inflow"];
    if (f.contains("rate")) {
      cfg.inflow.schedule = {{0.0, f["rate"].get<double>()}};
    } else if (f.contains("schedule")) {
      cfg.inflow.schedule.clear();
      for (const json& s : f["schedule"])
        cfg.inflow.schedule.push_back(
            {s["t"].get<double>(), s["rate"].get<double>()});
    }
    cfg.inflow.penetration = f.value("penetration", cfg.inflow.penetration);
    cfg.inflow.fixed_av_count =
        f.value("fixed_av_count", cfg.inflow.fixed_av_count);
    cfg.inflow.warmup = f.value("warmup", cfg.inflow.warmup);
    if (f.contains("random")) {
      const json& r = f["random"];
      cfg.random_inflow.enabled = true;
      cfg.random_inflow.min_rate = r.value("min_rate", 0.0);
      cfg.random_inflow.max_rate = r.value("max_rate", 4000.0);
      cfg.random_inflow.segment = r.value("segment", 600.0);
    }
  }
  cfg.dt = j.value("dt", cfg.dt);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("env")) {
    const json& e = j["env"];
    cfg.env.gamma = e.value("gamma", cfg.env.gamma);
    cfg.env.eta_min = e.value("eta_min", cfg.env.eta_min);
    cfg.env.eta_max = e.value("eta_max", cfg.env.eta_max);
    cfg.env.action_bins = e.value("action_bins", cfg.env.action_bins);
    cfg.env.time_penalty = e.value("time_penalty", cfg.env.time_penalty);
    cfg.env.v_ref = e.value("v_ref", cfg.env.v_ref);
    cfg.env.count_cap = e.value("count_cap", cfg.env.count_cap);
    if (e.contains("reward_scope"))
      cfg.env.reward_scope =
          reward_scope_from_string(e["reward_scope"].get<std::string>());
  }
  cfg.env.horizon = cfg.horizon;
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("hidden")) cfg.train.hidden = t["hidden"].get<std::vector<int>>();
    cfg.train.episodes_per_update =
        t.value("episodes_per_update", cfg.train.episodes_per_update);
    cfg.train.sweeps = t.value("sweeps", cfg.train.sweeps);
    if (t.contains("pool_mode"))
      cfg.train.pool_mode = pool_mode_from_string(t["pool_mode"].get<std::string>());
    cfg.train.pool_slots = t.value("pool_slots", cfg.train.pool_slots);
    cfg.train.eval_episodes = t.value("eval_episodes", cfg.train.eval_episodes);
    cfg.train.eval_greedy = t.value("eval_greedy", cfg.train.eval_greedy);
    cfg.train.eval_each_turn =
        t.value("eval_each_turn", cfg.train.eval_each_turn);
    if (t.contains("ppo")) {
      const json& p = t["ppo"];
      cfg.train.ppo.clip = p.value("clip", cfg.train.ppo.clip);
      cfg.train.ppo.epochs = p.value("epochs", cfg.train.ppo.epochs);
      cfg.train.ppo.minibatch = p.value("minibatch", cfg.train.ppo.minibatch);
      cfg.train.ppo.gae_lambda = p.value("gae_lambda", cfg.train.ppo.gae_lambda);
      cfg.train.ppo.vf_coef = p.value("vf_coef", cfg.train.ppo.vf_coef);
      cfg.train.ppo.ent_coef = p.value("ent_coef", cfg.train.ppo.ent_coef);
      cfg.train.ppo.lr = p.value("lr", cfg.train.ppo.lr);
    }
  }
  if (cfg.train.pool_mode == PoolMode::SharedPolicy) cfg.train.pool_slots = 1;
  cfg.train.ppo.gamma = cfg.env.gamma;
  cfg.validate();
  return cfg;
}

ScenarioConfig ScenarioConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ScenarioConfig::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << to_json() << '\n';
}

Simulation make_simulation(const ScenarioConfig& cfg, std::uint64_t seed) {
  InflowProcess inflow = cfg.inflow;
  if (cfg.random_inflow.enabled) {
    Rng rng(derive_seed(seed, 0xF10));
    inflow.schedule.clear();
    const double total = cfg.horizon * cfg.dt;
    for (double t = 0.0; t < total; t += cfg.random_inflow.segment) {
      inflow.schedule.push_back(
          {t, uniform(rng, cfg.random_inflow.min_rate, cfg.random_inflow.max_rate)});
    }
  }
  inflow.rng_seed = seed;
  return Simulation(cfg.network, cfg.idm, inflow, cfg.dt, seed, cfg.hdv_speed,
                    cfg.av_speed, cfg.vehicle_length);
}

}  // namespace mergeflow
