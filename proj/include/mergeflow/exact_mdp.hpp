#pragma once

#include <vector>

#include "mergeflow/rng.hpp"

namespace mergeflow {

// Tiny two-agent MDP with explicit transition and reward tensors, small
// enough for exact evaluation. Joint actions are indexed row-major over
// agents: ja = a_0 * |A_1| + a_1.
struct ExactDecMdp {
  int n_states = 0;
  std::vector<int> n_actions;        // per agent
  std::vector<double> transitions;   // [s][ja][s'], rows sum to 1
  std::vector<double> rewards;       // [s][ja]
  double gamma = 0.9;

  int n_agents() const { return static_cast<int>(n_actions.size()); }
  int joint_actions() const;
  int joint_index(const std::vector<int>& actions) const;
  double trans(int s, int ja, int s2) const;
  double reward(int s, int ja) const;
  void validate() const;
};

// Per agent: policy[s][a] = probability of action a in state s.
using TabularPolicy = std::vector<std::vector<double>>;
using JointPolicy = std::vector<TabularPolicy>;

JointPolicy uniform_joint_policy(const ExactDecMdp& mdp);
JointPolicy random_joint_policy(const ExactDecMdp& mdp, Rng& rng);

// Exact J under the joint policy: solves (I - gamma P) J = r directly.
std::vector<double> exact_policy_eval(const ExactDecMdp& mdp,
                                      const JointPolicy& joint);

// One agent-by-agent improvement sweep: each agent in index order is replaced
// by the deterministic greedy policy against the value of the current staged
// joint policy (earlier agents already improved). Lowest action index wins
// ties. Returns true if any agent's policy changed.
bool exact_a2pi_step(const ExactDecMdp& mdp, JointPolicy& joint);

ExactDecMdp random_dec_mdp(Rng& rng, int n_states, const std::vector<int>& n_actions,
                           double gamma);

// Monte-Carlo return estimate from one start state (oracle for tests).
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};
McEstimate mc_policy_value(const ExactDecMdp& mdp, const JointPolicy& joint,
                           int start_state, int episodes, int steps, Rng& rng);

}  // namespace mergeflow
