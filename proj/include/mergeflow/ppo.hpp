#pragma once

#include <string>
#include <vector>

#include "mergeflow/nn.hpp"

namespace mergeflow {

struct PpoConfig {
  double clip = 0.2;        // epsilon
  int epochs = 10;          // M
  int minibatch = 64;
  double gae_lambda = 0.95;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  double gamma = 0.9;       // taken from DecPomdpConfig when training
  double lr = 1e-4;

  void validate() const;
};

enum class PoolMode { FixedAgents, SharedPolicy };

PoolMode pool_mode_from_string(const std::string& s);
const char* to_string(PoolMode m);

// Training-loop parameters shared by the A2PI and plain-PPO drivers.
struct TrainConfig {
  std::vector<int> hidden{64, 64};
  int episodes_per_update = 10;
  int sweeps = 2;             // K
  PoolMode pool_mode = PoolMode::FixedAgents;
  int pool_slots = 6;         // N (1 in SharedPolicy mode)
  int eval_episodes = 5;
  bool eval_greedy = true;
  bool eval_each_turn = true; // also evaluate after every agent turn
  PpoConfig ppo;
};

// One agent's rollout record between entering and leaving the controlled set.
struct Trajectory {
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<double> logp;     // behavior log-probs
  std::vector<double> rewards;
  std::vector<double> values;
  bool terminated = true;       // false: truncated at horizon
  double bootstrap_value = 0.0; // V of the state after the last step
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
  void validate() const;
};

// GAE(lambda); fills advantages and return targets (advantage + value).
// Advantages here are raw; ppo_update normalizes per batch.
void compute_advantages(Trajectory& traj, double gamma, double lambda);

double prob_ratio(double new_logp, double old_logp);

// Per-sample clipped surrogate contribution (to be maximized).
double clipped_objective(double ratio, double advantage, double eps);

struct PolicySlot {
  Mlp actor;
  Mlp critic;
  AdamState actor_opt;
  AdamState critic_opt;
};

PolicySlot make_policy_slot(int obs_dim, int action_bins,
                            const std::vector<int>& hidden, Rng& rng,
                            double lr);

std::uint64_t slot_hash(const PolicySlot& slot);

struct EpochStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  int samples = 0;
  int minibatches = 0;
  double mean_episode_reward = 0.0;  // filled by the collection driver
  std::vector<EpochStats> epochs;
};

// Multi-epoch minibatch PPO update of one slot from its trajectories.
// Behavior log-probs in the batch are left untouched.
UpdateStats ppo_update(PolicySlot& slot, const std::vector<Trajectory>& batch,
                       const PpoConfig& cfg, Rng& shuffle_rng);

// Mean clipped surrogate of a frozen batch under the slot's current actor;
// used by the improvement-direction tests.
double surrogate_objective(const PolicySlot& slot,
                           const std::vector<Trajectory>& batch, double eps);

}  // namespace mergeflow
