#include "mergeflow/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mergeflow {

void PpoConfig::validate() const {
  if (clip <= 0.0 || clip >= 1.0)
    throw std::invalid_argument("PpoConfig: clip outside (0,1)");
  if (epochs < 1) throw std::invalid_argument("PpoConfig: epochs < 1");
  if (minibatch < 1) throw std::invalid_argument("PpoConfig: minibatch < 1");
  if (gae_lambda < 0.0 || gae_lambda > 1.0)
    throw std::invalid_argument("PpoConfig: gae_lambda outside [0,1]");
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("PpoConfig: gamma outside [0,1]");
  if (lr <= 0.0) throw std::invalid_argument("PpoConfig: lr must be positive");
}

PoolMode pool_mode_from_string(const std::string& s) {
  if (s == "fixed") return PoolMode::FixedAgents;
  if (s == "shared") return PoolMode::SharedPolicy;
  throw std::invalid_argument("unknown pool mode: " + s);
}

const char* to_string(PoolMode m) {
  return m == PoolMode::FixedAgents ? "fixed" : "shared";
}

void Trajectory::validate() const {
  const std::size_t n = actions.size();
  if (obs.size() != n || logp.size() != n || rewards.size() != n ||
      values.size() != n)
    throw std::invalid_argument("Trajectory: array length mismatch");
  for (double lp : logp)
    if (lp > 1e-9)
      throw std::invalid_argument("Trajectory: behavior log-prob > 0");
}

void compute_advantages(Trajectory& traj, double gamma, double lambda) {
  traj.validate();
  const std::size_t n = traj.size();
  traj.advantages.assign(n, 0.0);
  traj.returns.assign(n, 0.0);
  const double boot = traj.terminated ? 0.0 : traj.bootstrap_value;
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double v_next = (i + 1 < n) ? traj.values[i + 1] : boot;
    const double delta = traj.rewards[i] + gamma * v_next - traj.values[i];
    gae = delta + gamma * lambda * gae;
    traj.advantages[i] = gae;
    traj.returns[i] = gae + traj.values[i];
  }
}

double prob_ratio(double new_logp, double old_logp) {
  return std::exp(new_logp - old_logp);
}

double clipped_objective(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

PolicySlot make_policy_slot(int obs_dim, int action_bins,
                            const std::vector<int>& hidden, Rng& rng,
                            double lr) {
  std::vector<int> actor_sizes{obs_dim};
  actor_sizes.insert(actor_sizes.end(), hidden.begin(), hidden.end());
  actor_sizes.push_back(action_bins);
  std::vector<int> critic_sizes{obs_dim};
  critic_sizes.insert(critic_sizes.end(), hidden.begin(), hidden.end());
  critic_sizes.push_back(1);
  PolicySlot slot;
  // Near-uniform initial policy: tiny final actor layer.
  slot.actor = make_mlp(actor_sizes, rng, 0.01);
  slot.critic = make_mlp(critic_sizes, rng, 1.0);
  slot.actor_opt = AdamState::init(slot.actor, lr);
  slot.critic_opt = AdamState::init(slot.critic, lr);
  return slot;
}

std::uint64_t slot_hash(const PolicySlot& slot) {
  return params_hash(slot.actor) ^ (params_hash(slot.critic) * 0x100000001b3ULL);
}

namespace {

struct FlatSample {
  const Trajectory* traj;
  std::size_t idx;
  double norm_adv;
};

}  // namespace

UpdateStats ppo_update(PolicySlot& slot, const std::vector<Trajectory>& batch,
                       const PpoConfig& cfg, Rng& shuffle_rng) {
  cfg.validate();
  std::vector<FlatSample> samples;
  for (const Trajectory& t : batch) {
    if (t.advantages.size() != t.size())
      throw std::invalid_argument("ppo_update: advantages not computed");
    for (std::size_t i = 0; i < t.size(); ++i)
      samples.push_back({&t, i, 0.0});
  }
  if (samples.empty()) throw std::invalid_argument("ppo_update: empty batch");

  // Per-batch advantage normalization; a single sample has no batch
  // statistics and is used raw.
  if (samples.size() == 1) {
    samples[0].norm_adv = samples[0].traj->advantages[samples[0].idx];
  } else {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.traj->advantages[s.idx];
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& s : samples) {
      const double d = s.traj->advantages[s.idx] - mean;
      var += d * d;
    }
    const double stddev =
        std::max(std::sqrt(var / static_cast<double>(samples.size())), 1e-8);
    for (auto& s : samples)
      s.norm_adv = (s.traj->advantages[s.idx] - mean) / stddev;
  }

  UpdateStats stats;
  stats.samples = static_cast<int>(samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  double sum_pl = 0, sum_vl = 0, sum_ent = 0, sum_ratio = 0, sum_clip = 0;
  long long n_terms = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double ep_pl = 0, ep_vl = 0, ep_ent = 0, ep_ratio = 0, ep_clip = 0;
    int ep_minibatches = 0;
    // Fisher-Yates with our own uniform draws, for stream stability.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = uniform_int(shuffle_rng, static_cast<int>(i));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += cfg.minibatch) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const double inv_n = 1.0 / static_cast<double>(end - start);
      MlpGrads actor_g = MlpGrads::zeros_like(slot.actor);
      MlpGrads critic_g = MlpGrads::zeros_like(slot.critic);
      double mb_pl = 0, mb_vl = 0, mb_ent = 0;

      for (std::size_t k = start; k < end; ++k) {
        const FlatSample& s = samples[order[k]];
        const Trajectory& t = *s.traj;
        const std::vector<double>& ob = t.obs[s.idx];
        const int action = t.actions[s.idx];
        const double adv = s.norm_adv;

        ForwardCache actor_cache;
        std::vector<double> logits = forward(slot.actor, ob, &actor_cache);
        std::vector<double> lp = log_softmax(logits);
        const double ratio = prob_ratio(lp[action], t.logp[s.idx]);
        const bool clipped = std::abs(ratio - 1.0) > cfg.clip;
        // Flat region of the clipped objective contributes no gradient.
        const bool active = (adv >= 0.0 && ratio <= 1.0 + cfg.clip) ||
                            (adv < 0.0 && ratio >= 1.0 - cfg.clip);
        std::vector<double> probs(lp.size());
        for (std::size_t a = 0; a < lp.size(); ++a) probs[a] = std::exp(lp[a]);
        double entropy = 0.0;
        for (std::size_t a = 0; a < lp.size(); ++a)
          entropy -= probs[a] * lp[a];

        // dLoss/dlogits for loss = -surrogate - ent_coef * entropy.
        std::vector<double> dlogits(lp.size(), 0.0);
        if (active) {
          const double coef = -adv * ratio;  // d(-r*A)/dlogp(action) spread
          for (std::size_t a = 0; a < lp.size(); ++a)
            dlogits[a] = coef * ((a == static_cast<std::size_t>(action) ? 1.0 : 0.0) -
                                 probs[a]);
        }
        if (cfg.ent_coef != 0.0) {
          for (std::size_t a = 0; a < lp.size(); ++a)
            dlogits[a] += cfg.ent_coef * probs[a] * (lp[a] + entropy);
        }
        backward(slot.actor, actor_cache, dlogits, actor_g, inv_n);

        ForwardCache critic_cache;
        const double value = forward(slot.critic, ob, &critic_cache)[0];
        const double verr = value - t.returns[s.idx];
        const double dvalue[1] = {cfg.vf_coef * 2.0 * verr};
        backward(slot.critic, critic_cache, dvalue, critic_g, inv_n);

        mb_pl += -clipped_objective(ratio, adv, cfg.clip);
        mb_vl += verr * verr;
        mb_ent += entropy;
        sum_ratio += ratio;
        sum_clip += clipped ? 1.0 : 0.0;
        ep_ratio += ratio;
        ep_clip += clipped ? 1.0 : 0.0;
        ++n_terms;
      }

      const double count = static_cast<double>(end - start);
      if (!std::isfinite(mb_pl) || !std::isfinite(mb_vl))
        throw std::runtime_error(
            "ppo_update: non-finite loss (policy=" + std::to_string(mb_pl) +
            " value=" + std::to_string(mb_vl) + ")");
      adam_step(slot.actor, actor_g, slot.actor_opt);
      adam_step(slot.critic, critic_g, slot.critic_opt);
      sum_pl += mb_pl / count;
      sum_vl += mb_vl / count;
      sum_ent += mb_ent / count;
      ep_pl += mb_pl / count;
      ep_vl += mb_vl / count;
      ep_ent += mb_ent / count;
      ++ep_minibatches;
      ++stats.minibatches;
    }
    EpochStats es;
    es.policy_loss = ep_pl / ep_minibatches;
    es.value_loss = ep_vl / ep_minibatches;
    es.entropy = ep_ent / ep_minibatches;
    es.mean_ratio = ep_ratio / static_cast<double>(samples.size());
    es.clip_fraction = ep_clip / static_cast<double>(samples.size());
    stats.epochs.push_back(es);
  }

  stats.policy_loss = sum_pl / stats.minibatches;
  stats.value_loss = sum_vl / stats.minibatches;
  stats.entropy = sum_ent / stats.minibatches;
  stats.mean_ratio = sum_ratio / static_cast<double>(n_terms);
  stats.clip_fraction = sum_clip / static_cast<double>(n_terms);
  return stats;
}

double surrogate_objective(const PolicySlot& slot,
                           const std::vector<Trajectory>& batch, double eps) {
  double sum = 0.0;
  long long n = 0;
  std::vector<double> advs;
  for (const Trajectory& t : batch)
    for (double a : t.advantages) advs.push_back(a);
  double mean = 0.0;
  for (double a : advs) mean += a;
  mean /= static_cast<double>(advs.size());
  double var = 0.0;
  for (double a : advs) var += (a - mean) * (a - mean);
  const double stddev =
      std::max(std::sqrt(var / static_cast<double>(advs.size())), 1e-8);

  for (const Trajectory& t : batch) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::vector<double> lp = log_softmax(forward(slot.actor, t.obs[i]));
      const double ratio = prob_ratio(lp[t.actions[i]], t.logp[i]);
      const double adv = (t.advantages[i] - mean) / stddev;
      sum += clipped_objective(ratio, adv, eps);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace mergeflow
