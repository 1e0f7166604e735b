#include "mergeflow/rollout.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "mergeflow/env.hpp"

namespace mergeflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr std::uint64_t kEnvStream = 0xE17;
constexpr std::uint64_t kActStream = 0xAC7;
constexpr std::uint64_t kShuffleStream = 0x5F1;
constexpr std::uint64_t kInitStream = 0x171;
constexpr std::uint64_t kEvalStream = 0xEA1;
}  // namespace

std::uint64_t episode_env_seed(std::uint64_t base, int sweep, int slot,
                               int episode) {
  return derive_seed(base, kEnvStream,
                     (static_cast<std::uint64_t>(sweep) << 32) |
                         static_cast<std::uint32_t>(slot),
                     static_cast<std::uint64_t>(episode));
}

std::uint64_t episode_action_seed(std::uint64_t base, int sweep, int slot,
                                  int episode) {
  return derive_seed(base, kActStream,
                     (static_cast<std::uint64_t>(sweep) << 32) |
                         static_cast<std::uint32_t>(slot),
                     static_cast<std::uint64_t>(episode));
}

std::uint64_t update_shuffle_seed(std::uint64_t base, int sweep, int slot) {
  return derive_seed(base, kShuffleStream,
                     (static_cast<std::uint64_t>(sweep) << 32) |
                         static_cast<std::uint32_t>(slot));
}

std::uint64_t eval_env_seed(std::uint64_t base, int episode) {
  return derive_seed(base, kEvalStream, static_cast<std::uint64_t>(episode));
}

PolicyPool make_pool(const ScenarioConfig& scenario) {
  PolicyPool pool;
  pool.mode = scenario.train.pool_mode;
  const int n =
      pool.mode == PoolMode::SharedPolicy ? 1 : scenario.train.pool_slots;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(scenario.seed, kInitStream, static_cast<std::uint64_t>(i)));
    pool.slots.push_back(make_policy_slot(scenario.obs_dim(),
                                          scenario.env.action_bins,
                                          scenario.train.hidden, rng,
                                          scenario.train.ppo.lr));
  }
  return pool;
}

SlotAssigner::SlotAssigner(PoolMode mode, int n_slots) : mode_(mode) {
  for (int i = 0; i < n_slots; ++i) free_.insert(i);
}

int SlotAssigner::assign(std::int64_t agent_id) {
  if (active_.count(agent_id))
    throw std::logic_error("SlotAssigner: agent already active");
  if (mode_ == PoolMode::SharedPolicy) {
    active_[agent_id] = 0;
    return 0;
  }
  if (free_.empty())
    throw std::runtime_error(
        "SlotAssigner: more concurrent AVs than fixed slots; use SharedPolicy "
        "mode");
  const int slot = *free_.begin();
  free_.erase(free_.begin());
  active_[agent_id] = slot;
  return slot;
}

void SlotAssigner::release(std::int64_t agent_id) {
  auto it = active_.find(agent_id);
  if (it == active_.end())
    throw std::logic_error("SlotAssigner: releasing unknown agent");
  if (mode_ == PoolMode::FixedAgents) free_.insert(it->second);
  active_.erase(it);
}

int SlotAssigner::slot_of(std::int64_t agent_id) const {
  auto it = active_.find(agent_id);
  if (it == active_.end())
    throw std::logic_error("SlotAssigner: unknown agent");
  return it->second;
}

namespace {

struct OpenTrajectory {
  int slot = 0;
  bool record = false;
  std::vector<double> last_obs;
  Trajectory traj;
};

}  // namespace

EpisodeRollout collect_episode(const ScenarioConfig& scenario,
                               const PolicyPool& pool,
                               const EpisodeOptions& opt) {
  Environment env(scenario, opt.env_seed);
  Rng act_rng(opt.action_seed);
  SlotAssigner assigner(pool.mode, pool.size());
  std::map<std::int64_t, OpenTrajectory> open;
  EpisodeRollout out;

  auto should_record = [&](int slot) {
    return opt.record_slot == kRecordAll || opt.record_slot == slot;
  };
  auto admit = [&](std::int64_t id, const Observation& ob) {
    OpenTrajectory o;
    o.slot = assigner.assign(id);
    o.record = should_record(o.slot);
    o.last_obs = ob.values;
    open.emplace(id, std::move(o));
  };
  auto finalize = [&](std::int64_t id, bool terminated) {
    auto it = open.find(id);
    OpenTrajectory& o = it->second;
    if (o.record && o.traj.size() > 0) {
      o.traj.terminated = terminated;
      if (!terminated)
        o.traj.bootstrap_value = forward(pool.slots[o.slot].critic, o.last_obs)[0];
      out.trajectories[o.slot].push_back(std::move(o.traj));
    }
    assigner.release(id);
    open.erase(it);
  };

  StepResult res = env.reset();
  for (std::int64_t id : res.entered) admit(id, res.obs.at(id));

  while (!res.done) {
    std::map<std::int64_t, int> actions;
    for (std::int64_t id : env.controlled()) {
      OpenTrajectory& o = open.at(id);
      const PolicySlot& slot = pool.slots[o.slot];
      const std::vector<double> logits = forward(slot.actor, o.last_obs);
      int action;
      double logp;
      if (opt.greedy) {
        action = argmax(logits);
        logp = log_softmax(logits)[action];
      } else {
        action = sample_categorical(logits, act_rng, &logp);
      }
      actions[id] = action;
      if (o.record) {
        o.traj.obs.push_back(o.last_obs);
        o.traj.actions.push_back(action);
        o.traj.logp.push_back(logp);
        o.traj.values.push_back(forward(slot.critic, o.last_obs)[0]);
      }
    }

    res = env.step(actions);
    out.total_reward += res.reward;
    ++out.steps;

    for (auto& [id, o] : open) {
      if (actions.count(id) && o.record) o.traj.rewards.push_back(res.reward);
    }
    for (std::int64_t id : res.exited) finalize(id, /*terminated=*/true);
    for (std::int64_t id : res.entered) admit(id, res.obs.at(id));
    for (auto& [id, o] : open) {
      auto it = res.obs.find(id);
      if (it != res.obs.end()) o.last_obs = it->second.values;
    }
  }

  // Agents still controlled at the horizon are truncated, not terminal.
  std::vector<std::int64_t> remaining;
  for (const auto& [id, o] : open) remaining.push_back(id);
  for (std::int64_t id : remaining) finalize(id, /*terminated=*/false);

  out.avg_tt = env.sim().travel_time_stats().avg_tt;
  return out;
}

SweepSchedule SweepSchedule::ascending(int n_slots, int episodes_per_update) {
  SweepSchedule s;
  s.order.resize(n_slots);
  for (int i = 0; i < n_slots; ++i) s.order[i] = i;
  s.episodes_per_update = episodes_per_update;
  return s;
}

std::vector<UpdateStats> a2pi_sweep(PolicyPool& pool,
                                    const ScenarioConfig& scenario,
                                    const PpoConfig& cfg,
                                    const SweepSchedule& schedule,
                                    const SweepObserver& observer) {
  std::vector<bool> seen(pool.size(), false);
  for (int slot : schedule.order) {
    if (slot < 0 || slot >= pool.size() || seen[slot])
      throw std::invalid_argument("a2pi_sweep: order must be a permutation of slots");
    seen[slot] = true;
  }
  const int k = pool.iteration;
  std::vector<UpdateStats> stats;
  for (int slot : schedule.order) {
    if (observer) observer(pool, slot, SweepPhase::CollectStart);
    std::vector<Trajectory> batch;
    double reward_sum = 0.0;
    for (int e = 0; e < schedule.episodes_per_update; ++e) {
      EpisodeOptions opt;
      opt.env_seed = episode_env_seed(scenario.seed, k, slot, e);
      opt.action_seed = episode_action_seed(scenario.seed, k, slot, e);
      opt.record_slot = slot;
      EpisodeRollout ep = collect_episode(scenario, pool, opt);
      reward_sum += ep.total_reward;
      auto it = ep.trajectories.find(slot);
      if (it == ep.trajectories.end()) continue;
      for (Trajectory& t : it->second) {
        compute_advantages(t, cfg.gamma, cfg.gae_lambda);
        batch.push_back(std::move(t));
      }
    }
    if (observer) observer(pool, slot, SweepPhase::PreUpdate);
    UpdateStats us;
    if (!batch.empty()) {
      Rng shuffle(update_shuffle_seed(scenario.seed, k, slot));
      us = ppo_update(pool.slots[slot], batch, cfg, shuffle);
    }
    us.mean_episode_reward = reward_sum / schedule.episodes_per_update;
    stats.push_back(std::move(us));
    if (observer) observer(pool, slot, SweepPhase::PostUpdate);
  }
  pool.iteration += 1;
  return stats;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalResult evaluate_pool(const ScenarioConfig& scenario, const PolicyPool& pool,
                         const std::vector<std::uint64_t>& env_seeds,
                         bool greedy) {
  EvalResult r;
  for (std::size_t j = 0; j < env_seeds.size(); ++j) {
    EpisodeOptions opt;
    opt.env_seed = env_seeds[j];
    opt.action_seed = derive_seed(env_seeds[j], kActStream, 0xE);
    opt.record_slot = kRecordNone;
    opt.greedy = greedy;
    EpisodeRollout ep = collect_episode(scenario, pool, opt);
    r.rewards.push_back(ep.total_reward);
    r.avg_tts.push_back(ep.avg_tt);
  }
  r.median_reward = median(r.rewards);
  r.median_avg_tt = median(r.avg_tts);
  return r;
}

namespace {

std::vector<std::uint64_t> held_out_seeds(const ScenarioConfig& scenario) {
  std::vector<std::uint64_t> seeds;
  for (int j = 0; j < scenario.train.eval_episodes; ++j)
    seeds.push_back(eval_env_seed(scenario.seed, j));
  return seeds;
}

void append_eval(const ScenarioConfig& scenario, const PolicyPool& pool,
                 const std::vector<std::uint64_t>& seeds, int agent,
                 std::vector<SweepPoint>& curve) {
  EvalResult ev = evaluate_pool(scenario, pool, seeds, scenario.train.eval_greedy);
  curve.push_back({pool.iteration, agent, ev.median_reward, ev.median_avg_tt});
}

}  // namespace

TrainResult train(const ScenarioConfig& scenario, int sweeps_override,
                  const std::string& out_dir) {
  scenario.validate();
  PpoConfig cfg = scenario.train.ppo;
  cfg.gamma = scenario.env.gamma;
  const int sweeps =
      sweeps_override >= 0 ? sweeps_override : scenario.train.sweeps;
  TrainResult result;
  result.pool = make_pool(scenario);
  const std::vector<std::uint64_t> seeds = held_out_seeds(scenario);
  append_eval(scenario, result.pool, seeds, -1, result.curve);
  if (!out_dir.empty())
    save_pool(out_dir + "/checkpoints/sweep_000", result.pool);

  SweepSchedule schedule = SweepSchedule::ascending(
      result.pool.size(), scenario.train.episodes_per_update);
  for (int k = 0; k < sweeps; ++k) {
    SweepObserver observer;
    if (scenario.train.eval_each_turn && result.pool.size() > 1) {
      observer = [&](const PolicyPool& pool, int slot, SweepPhase phase) {
        if (phase == SweepPhase::PostUpdate && slot != schedule.order.back())
          append_eval(scenario, pool, seeds, slot, result.curve);
      };
    }
    std::vector<UpdateStats> stats =
        a2pi_sweep(result.pool, scenario, cfg, schedule, observer);
    for (std::size_t i = 0; i < stats.size(); ++i)
      result.updates.push_back({k, schedule.order[i], std::move(stats[i])});
    append_eval(scenario, result.pool, seeds, schedule.order.back(),
                result.curve);
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "sweep_%03d", result.pool.iteration);
      save_pool(out_dir + "/checkpoints/" + name, result.pool);
    }
  }
  return result;
}

TrainResult train_plain_ppo(const ScenarioConfig& scenario, int sweeps_override) {
  scenario.validate();
  PpoConfig cfg = scenario.train.ppo;
  cfg.gamma = scenario.env.gamma;
  const int sweeps =
      sweeps_override >= 0 ? sweeps_override : scenario.train.sweeps;
  TrainResult result;
  result.pool = make_pool(scenario);
  if (result.pool.size() != 1)
    throw std::invalid_argument("train_plain_ppo: pool must have one slot");
  const std::vector<std::uint64_t> seeds = held_out_seeds(scenario);
  append_eval(scenario, result.pool, seeds, -1, result.curve);

  for (int k = 0; k < sweeps; ++k) {
    std::vector<Trajectory> batch;
    for (int e = 0; e < scenario.train.episodes_per_update; ++e) {
      EpisodeOptions opt;
      opt.env_seed = episode_env_seed(scenario.seed, k, 0, e);
      opt.action_seed = episode_action_seed(scenario.seed, k, 0, e);
      opt.record_slot = 0;
      EpisodeRollout ep = collect_episode(scenario, result.pool, opt);
      auto it = ep.trajectories.find(0);
      if (it == ep.trajectories.end()) continue;
      for (Trajectory& t : it->second) {
        compute_advantages(t, cfg.gamma, cfg.gae_lambda);
        batch.push_back(std::move(t));
      }
    }
    if (!batch.empty()) {
      Rng shuffle(update_shuffle_seed(scenario.seed, k, 0));
      ppo_update(result.pool.slots[0], batch, cfg, shuffle);
    }
    result.pool.iteration += 1;
    append_eval(scenario, result.pool, seeds, 0, result.curve);
  }
  return result;
}

void save_pool(const std::string& dir, const PolicyPool& pool) {
  fs::create_directories(dir);
  for (int i = 0; i < pool.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "slot_%02d.ckpt", i);
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    if (!os) throw std::runtime_error("save_pool: cannot write " + dir);
    save_mlp(os, pool.slots[i].actor);
    save_mlp(os, pool.slots[i].critic);
    save_adam(os, pool.slots[i].actor_opt);
    save_adam(os, pool.slots[i].critic_opt);
  }
  json manifest;
  manifest["mode"] = to_string(pool.mode);
  manifest["slots"] = pool.size();
  manifest["iteration"] = pool.iteration;
  std::ofstream ms(fs::path(dir) / "manifest.json");
  ms << manifest.dump(2) << '\n';
}

PolicyPool load_pool(const std::string& dir) {
  std::ifstream ms(fs::path(dir) / "manifest.json");
  if (!ms) throw std::runtime_error("load_pool: no manifest in " + dir);
  json manifest = json::parse(ms);
  PolicyPool pool;
  pool.mode = pool_mode_from_string(manifest["mode"].get<std::string>());
  pool.iteration = manifest["iteration"].get<int>();
  const int n = manifest["slots"].get<int>();
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "slot_%02d.ckpt", i);
    std::ifstream is(fs::path(dir) / name, std::ios::binary);
    if (!is) throw std::runtime_error("load_pool: missing slot file in " + dir);
    PolicySlot slot;
    slot.actor = load_mlp(is);
    slot.critic = load_mlp(is);
    slot.actor_opt = load_adam(is);
    slot.critic_opt = load_adam(is);
    pool.slots.push_back(std::move(slot));
  }
  return pool;
}

}  // namespace mergeflow
