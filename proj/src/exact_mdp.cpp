#include "mergeflow/exact_mdp.hpp"

#include <cmath>
#include <stdexcept>

namespace mergeflow {

int ExactDecMdp::joint_actions() const {
  int n = 1;
  for (int a : n_actions) n *= a;
  return n;
}

int ExactDecMdp::joint_index(const std::vector<int>& actions) const {
  int ja = 0;
  for (std::size_t i = 0; i < n_actions.size(); ++i)
    ja = ja * n_actions[i] + actions[i];
  return ja;
}

double ExactDecMdp::trans(int s, int ja, int s2) const {
  return transitions[(static_cast<std::size_t>(s) * joint_actions() + ja) *
                         n_states +
                     s2];
}

double ExactDecMdp::reward(int s, int ja) const {
  return rewards[static_cast<std::size_t>(s) * joint_actions() + ja];
}

void ExactDecMdp::validate() const {
  if (n_states < 1 || n_actions.empty())
    throw std::invalid_argument("ExactDecMdp: empty state or agent set");
  const int ja_n = joint_actions();
  if (transitions.size() !=
      static_cast<std::size_t>(n_states) * ja_n * n_states)
    throw std::invalid_argument("ExactDecMdp: transition tensor size");
  if (rewards.size() != static_cast<std::size_t>(n_states) * ja_n)
    throw std::invalid_argument("ExactDecMdp: reward tensor size");
  for (int s = 0; s < n_states; ++s) {
    for (int ja = 0; ja < ja_n; ++ja) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) sum += trans(s, ja, s2);
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("ExactDecMdp: transition row does not sum to 1");
      if (!std::isfinite(reward(s, ja)))
        throw std::invalid_argument("ExactDecMdp: non-finite reward");
    }
  }
}

JointPolicy uniform_joint_policy(const ExactDecMdp& mdp) {
  JointPolicy joint;
  for (int i = 0; i < mdp.n_agents(); ++i) {
    TabularPolicy pi(mdp.n_states,
                     std::vector<double>(mdp.n_actions[i],
                                         1.0 / mdp.n_actions[i]));
    joint.push_back(pi);
  }
  return joint;
}

JointPolicy random_joint_policy(const ExactDecMdp& mdp, Rng& rng) {
  JointPolicy joint;
  for (int i = 0; i < mdp.n_agents(); ++i) {
    TabularPolicy pi(mdp.n_states, std::vector<double>(mdp.n_actions[i], 0.0));
    for (int s = 0; s < mdp.n_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < mdp.n_actions[i]; ++a) {
        pi[s][a] = -std::log(1.0 - u01(rng));
        sum += pi[s][a];
      }
      for (int a = 0; a < mdp.n_actions[i]; ++a) pi[s][a] /= sum;
    }
    joint.push_back(pi);
  }
  return joint;
}

namespace {

// Probability of joint action ja in state s under the joint policy.
double joint_prob(const ExactDecMdp& mdp, const JointPolicy& joint, int s,
                  int ja) {
  double p = 1.0;
  for (int i = mdp.n_agents() - 1; i >= 0; --i) {
    const int a = ja % mdp.n_actions[i];
    ja /= mdp.n_actions[i];
    p *= joint[i][s][a];
  }
  return p;
}

// Gaussian elimination with partial pivoting; A is n x n row-major.
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r * n + col]) > std::abs(A[pivot * n + col])) pivot = r;
    if (std::abs(A[pivot * n + col]) < 1e-14)
      throw std::runtime_error("solve_linear: singular system");
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(A[col * n + c], A[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = A[r * n + col] / A[col * n + col];
      for (int c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double sum = b[r];
    for (int c = r + 1; c < n; ++c) sum -= A[r * n + c] * x[c];
    x[r] = sum / A[r * n + r];
  }
  return x;
}

}  // namespace

std::vector<double> exact_policy_eval(const ExactDecMdp& mdp,
                                      const JointPolicy& joint) {
  const int n = mdp.n_states;
  const int ja_n = mdp.joint_actions();
  std::vector<double> A(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> r(n, 0.0);
  for (int s = 0; s < n; ++s) {
    A[s * n + s] = 1.0;
    for (int ja = 0; ja < ja_n; ++ja) {
      const double p = joint_prob(mdp, joint, s, ja);
      if (p == 0.0) continue;
      r[s] += p * mdp.reward(s, ja);
      for (int s2 = 0; s2 < n; ++s2)
        A[s * n + s2] -= mdp.gamma * p * mdp.trans(s, ja, s2);
    }
  }
  return solve_linear(std::move(A), std::move(r));
}

bool exact_a2pi_step(const ExactDecMdp& mdp, JointPolicy& joint) {
  bool changed = false;
  for (int agent = 0; agent < mdp.n_agents(); ++agent) {
    const std::vector<double> J = exact_policy_eval(mdp, joint);
    const int n_a = mdp.n_actions[agent];
    TabularPolicy improved = joint[agent];
    for (int s = 0; s < mdp.n_states; ++s) {
      // Q over this agent's actions, marginalizing the others under the
      // current staged joint policy.
      std::vector<double> q(n_a, 0.0);
      for (int ja = 0; ja < mdp.joint_actions(); ++ja) {
        // Decompose ja to find this agent's action and the others' prob.
        int rest = ja;
        double p_others = 1.0;
        int a_agent = -1;
        for (int i = mdp.n_agents() - 1; i >= 0; --i) {
          const int a = rest % mdp.n_actions[i];
          rest /= mdp.n_actions[i];
          if (i == agent)
            a_agent = a;
          else
            p_others *= joint[i][s][a];
        }
        if (p_others == 0.0) continue;
        double val = mdp.reward(s, ja);
        for (int s2 = 0; s2 < mdp.n_states; ++s2)
          val += mdp.gamma * mdp.trans(s, ja, s2) * J[s2];
        q[a_agent] += p_others * val;
      }
      int best = 0;
      for (int a = 1; a < n_a; ++a)
        if (q[a] > q[best] + 1e-12) best = a;  // lowest index wins ties
      double q_current = 0.0;
      for (int a = 0; a < n_a; ++a) q_current += joint[agent][s][a] * q[a];
      if (q[best] > q_current + 1e-12) {
        std::vector<double> det(n_a, 0.0);
        det[best] = 1.0;
        if (det != improved[s]) {
          improved[s] = det;
          changed = true;
        }
      }
    }
    joint[agent] = improved;
  }
  return changed;
}

ExactDecMdp random_dec_mdp(Rng& rng, int n_states,
                           const std::vector<int>& n_actions, double gamma) {
  ExactDecMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  const int ja_n = mdp.joint_actions();
  mdp.transitions.resize(static_cast<std::size_t>(n_states) * ja_n * n_states);
  mdp.rewards.resize(static_cast<std::size_t>(n_states) * ja_n);
  for (int s = 0; s < n_states; ++s) {
    for (int ja = 0; ja < ja_n; ++ja) {
      double sum = 0.0;
      std::vector<double> row(n_states);
      for (int s2 = 0; s2 < n_states; ++s2) {
        row[s2] = -std::log(1.0 - u01(rng));
        sum += row[s2];
      }
      for (int s2 = 0; s2 < n_states; ++s2)
        mdp.transitions[(static_cast<std::size_t>(s) * ja_n + ja) * n_states +
                        s2] = row[s2] / sum;
      mdp.rewards[static_cast<std::size_t>(s) * ja_n + ja] =
          uniform(rng, -1.0, 1.0);
    }
  }
  mdp.validate();
  return mdp;
}

McEstimate mc_policy_value(const ExactDecMdp& mdp, const JointPolicy& joint,
                           int start_state, int episodes, int steps, Rng& rng) {
  auto sample_action = [&](int agent, int s) {
    const double u = u01(rng);
    double cum = 0.0;
    for (int a = 0; a < mdp.n_actions[agent]; ++a) {
      cum += joint[agent][s][a];
      if (u < cum) return a;
    }
    return mdp.n_actions[agent] - 1;
  };
  double sum = 0.0, sum_sq = 0.0;
  std::vector<int> acts(mdp.n_agents());
  for (int e = 0; e < episodes; ++e) {
    int s = start_state;
    double ret = 0.0, g = 1.0;
    for (int t = 0; t < steps; ++t) {
      for (int i = 0; i < mdp.n_agents(); ++i) acts[i] = sample_action(i, s);
      const int ja = mdp.joint_index(acts);
      ret += g * mdp.reward(s, ja);
      g *= mdp.gamma;
      const double u = u01(rng);
      double cum = 0.0;
      int next = mdp.n_states - 1;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        cum += mdp.trans(s, ja, s2);
        if (u < cum) {
          next = s2;
          break;
        }
      }
      s = next;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  McEstimate est;
  est.mean = sum / episodes;
  const double var = std::max(0.0, sum_sq / episodes - est.mean * est.mean);
  est.std_error = std::sqrt(var / episodes);
  return est;
}

}  // namespace mergeflow
