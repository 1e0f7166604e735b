#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mergeflow/ppo.hpp"
#include "mergeflow/scenario.hpp"

namespace mergeflow {

struct PolicyPool {
  PoolMode mode = PoolMode::FixedAgents;
  std::vector<PolicySlot> slots;
  int iteration = 0;  // completed sweeps

  int size() const { return static_cast<int>(slots.size()); }
};

PolicyPool make_pool(const ScenarioConfig& scenario);

// Maps controlled AVs to policy slots for the duration of one episode.
// FixedAgents: each entering AV takes the lowest free slot (the i-th
// controlled AV gets slot i); more than N concurrent AVs is an error.
// SharedPolicy: every AV maps to slot 0.
class SlotAssigner {
 public:
  SlotAssigner(PoolMode mode, int n_slots);
  int assign(std::int64_t agent_id);
  void release(std::int64_t agent_id);
  int slot_of(std::int64_t agent_id) const;

 private:
  PoolMode mode_;
  std::set<int> free_;
  std::map<std::int64_t, int> active_;
};

// Deterministic per-episode stream derivation, shared by the A2PI and the
// plain-PPO training loops so the two coincide for N=1.
std::uint64_t episode_env_seed(std::uint64_t base, int sweep, int slot, int episode);
std::uint64_t episode_action_seed(std::uint64_t base, int sweep, int slot, int episode);
std::uint64_t update_shuffle_seed(std::uint64_t base, int sweep, int slot);
std::uint64_t eval_env_seed(std::uint64_t base, int episode);

inline constexpr int kRecordAll = -1;
inline constexpr int kRecordNone = -2;

struct EpisodeOptions {
  std::uint64_t env_seed = 0;
  std::uint64_t action_seed = 0;
  int record_slot = kRecordAll;  // slot index, kRecordAll or kRecordNone
  bool greedy = false;
};

struct EpisodeRollout {
  std::map<int, std::vector<Trajectory>> trajectories;  // by slot
  double total_reward = 0.0;
  double avg_tt = 0.0;
  int steps = 0;
};

// Plays one episode with all agents acting from their assigned slots and
// returns the recorded trajectories (advantages not yet computed).
EpisodeRollout collect_episode(const ScenarioConfig& scenario,
                               const PolicyPool& pool,
                               const EpisodeOptions& opt);

struct SweepSchedule {
  std::vector<int> order;       // permutation of slot indices
  int episodes_per_update = 10;

  static SweepSchedule ascending(int n_slots, int episodes_per_update);
};

enum class SweepPhase { CollectStart, PreUpdate, PostUpdate };
using SweepObserver =
    std::function<void(const PolicyPool&, int slot, SweepPhase)>;

// One A2PI sweep: agents improve in schedule order; agent i collects episodes
// under the staged joint policy (earlier agents already updated this sweep)
// and only slot i's parameters change.
std::vector<UpdateStats> a2pi_sweep(PolicyPool& pool,
                                    const ScenarioConfig& scenario,
                                    const PpoConfig& cfg,
                                    const SweepSchedule& schedule,
                                    const SweepObserver& observer = {});

struct EvalResult {
  std::vector<double> rewards;  // per episode
  std::vector<double> avg_tts;
  double median_reward = 0.0;
  double median_avg_tt = 0.0;
};

EvalResult evaluate_pool(const ScenarioConfig& scenario, const PolicyPool& pool,
                         const std::vector<std::uint64_t>& env_seeds,
                         bool greedy);

struct SweepPoint {
  int sweep = 0;   // completed sweeps when evaluated (0 = untrained)
  int agent = -1;  // slot just updated, -1 for the initial evaluation
  double eval_reward = 0.0;
  double eval_avg_tt = 0.0;
};

struct UpdateRecord {
  int sweep = 0;
  int slot = 0;
  UpdateStats stats;
};

struct TrainResult {
  PolicyPool pool;
  std::vector<SweepPoint> curve;
  std::vector<UpdateRecord> updates;
};

// Full training driver: K sweeps with per-turn evaluation on held-out derived
// seeds; checkpoints each sweep under out_dir (when given). On divergence the
// last written checkpoint is retained and the error is rethrown.
TrainResult train(const ScenarioConfig& scenario, int sweeps_override = -1,
                  const std::string& out_dir = "");

// Reference single-policy PPO loop (no sweep staging); with one slot and one
// agent it must reproduce train() exactly.
TrainResult train_plain_ppo(const ScenarioConfig& scenario,
                            int sweeps_override = -1);

double median(std::vector<double> values);

// Checkpoint directory: one file per slot plus manifest.json.
void save_pool(const std::string& dir, const PolicyPool& pool);
PolicyPool load_pool(const std::string& dir);

}  // namespace mergeflow
