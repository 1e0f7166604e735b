#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mergeflow/ppo.hpp"

using namespace mergeflow;

namespace {

Trajectory make_traj(std::vector<double> rewards, std::vector<double> values,
                     bool terminated = true, double bootstrap = 0.0) {
  Trajectory t;
  const std::size_t n = rewards.size();
  t.rewards = std::move(rewards);
  t.values = std::move(values);
  t.obs.assign(n, std::vector<double>{0.0, 0.0});
  t.actions.assign(n, 0);
  t.logp.assign(n, -1.0);
  t.terminated = terminated;
  t.bootstrap_value = bootstrap;
  return t;
}

// Random trajectory over a slot's actual policy, so log-probs are consistent.
Trajectory rollout_traj(const PolicySlot& slot, int steps, Rng& rng) {
  Trajectory t;
  for (int i = 0; i < steps; ++i) {
    std::vector<double> obs(slot.actor.in_dim());
    for (double& v : obs) v = uniform(rng, 0, 1);
    const auto logits = forward(slot.actor, obs);
    double lp;
    const int a = sample_categorical(logits, rng, &lp);
    t.obs.push_back(obs);
    t.actions.push_back(a);
    t.logp.push_back(lp);
    t.values.push_back(forward(slot.critic, obs)[0]);
    t.rewards.push_back(uniform(rng, -1, 1));
  }
  return t;
}

}  // namespace

TEST_CASE("gae basics") {
  SUBCASE("all zeros in, all zeros out") {
    Trajectory t = make_traj({0, 0, 0}, {0, 0, 0});
    compute_advantages(t, 0.9, 0.95);
    for (double a : t.advantages) CHECK(a == 0.0);
    for (double r : t.returns) CHECK(r == 0.0);
  }
  SUBCASE("lambda 0 reduces to one-step TD errors") {
    Trajectory t = make_traj({1, -1, 2}, {0.5, 0.25, -0.5});
    compute_advantages(t, 0.9, 0.0);
    CHECK(t.advantages[0] == doctest::Approx(1 + 0.9 * 0.25 - 0.5));
    CHECK(t.advantages[1] == doctest::Approx(-1 + 0.9 * -0.5 - 0.25));
    CHECK(t.advantages[2] == doctest::Approx(2 + 0.0 - -0.5));
  }
  SUBCASE("lambda 1 with zero values gives discounted returns-to-go") {
    Rng rng(3);
    std::vector<double> rewards;
    for (int i = 0; i < 25; ++i) rewards.push_back(uniform(rng, -2, 2));
    Trajectory t = make_traj(rewards, std::vector<double>(25, 0.0));
    compute_advantages(t, 0.9, 1.0);
    for (std::size_t i = 0; i < 25; ++i) {
      // Naive-sum oracle.
      double want = 0.0, g = 1.0;
      for (std::size_t k = i; k < 25; ++k) {
        want += g * rewards[k];
        g *= 0.9;
      }
      CHECK(t.advantages[i] == doctest::Approx(want).epsilon(1e-10));
      CHECK(t.returns[i] == doctest::Approx(want).epsilon(1e-10));
    }
  }
  SUBCASE("truncated trajectory bootstraps the terminal value") {
    Trajectory t = make_traj({1}, {0.0}, /*terminated=*/false, /*bootstrap=*/2.0);
    compute_advantages(t, 0.5, 1.0);
    CHECK(t.advantages[0] == doctest::Approx(1 + 0.5 * 2.0));
  }
  SUBCASE("length mismatch rejected") {
    Trajectory t = make_traj({1, 2}, {0.0, 0.0});
    t.values.pop_back();
    CHECK_THROWS_AS(compute_advantages(t, 0.9, 0.95), std::invalid_argument);
  }
}

TEST_CASE("probability ratio") {
  CHECK(prob_ratio(-1.5, -1.5) == doctest::Approx(1.0));
  CHECK(prob_ratio(-1.0 + std::log(2.0), -1.0) == doctest::Approx(2.0));
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const double a = uniform(rng, -5, 0), b = uniform(rng, -5, 0);
    CHECK(prob_ratio(a, b) == doctest::Approx(std::exp(a - b)).epsilon(1e-12));
  }
}

TEST_CASE("clipped objective") {
  CHECK(clipped_objective(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  // Negative advantage: the min takes the pessimistic clipped branch.
  CHECK(clipped_objective(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_objective(1.0, 3.7, 0.2) == doctest::Approx(3.7));
  CHECK(clipped_objective(1.0, -2.2, 0.2) == doctest::Approx(-2.2));
  // Clip guard: when clipping binds the magnitude never exceeds (1+eps)|A|.
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double ratio = uniform(rng, 0.0, 3.0);
    const double adv = uniform(rng, -2, 2);
    const double v = clipped_objective(ratio, adv, 0.2);
    CHECK(v <= 1.2 * std::abs(adv) + 1e-12);
  }
}

TEST_CASE("ppo_update with zero advantages and zero entropy leaves the actor fixed") {
  Rng rng(11);
  PolicySlot slot = make_policy_slot(2, 4, {8}, rng, 1e-3);
  const std::uint64_t actor_before = params_hash(slot.actor);
  Trajectory t = rollout_traj(slot, 12, rng);
  compute_advantages(t, 0.9, 0.95);
  for (double& a : t.advantages) a = 0.0;
  PpoConfig cfg;
  cfg.ent_coef = 0.0;
  cfg.epochs = 3;
  cfg.minibatch = 4;
  Rng shuffle(1);
  ppo_update(slot, {t}, cfg, shuffle);
  CHECK(params_hash(slot.actor) == actor_before);
}

TEST_CASE("single positive-advantage step raises the taken action's log-prob") {
  Rng rng(13);
  PolicySlot slot = make_policy_slot(2, 4, {8}, rng, 1e-3);
  Trajectory t;
  t.obs = {{0.4, -0.2}};
  const auto logits = forward(slot.actor, t.obs[0]);
  double lp;
  Rng act(5);
  const int a = sample_categorical(logits, act, &lp);
  t.actions = {a};
  t.logp = {lp};
  t.rewards = {1.0};
  t.values = {forward(slot.critic, t.obs[0])[0]};
  t.advantages = {1.0};
  t.returns = {1.0};

  PpoConfig cfg;
  cfg.ent_coef = 0.0;
  cfg.epochs = 1;
  cfg.minibatch = 1;
  Rng shuffle(2);
  ppo_update(slot, {t}, cfg, shuffle);
  const double lp_after = log_softmax(forward(slot.actor, t.obs[0]))[a];
  CHECK(lp_after > lp);
}

TEST_CASE("update is deterministic for a fixed seed") {
  auto run = [](std::uint64_t seed) {
    Rng rng(17);
    PolicySlot slot = make_policy_slot(3, 5, {16, 16}, rng, 1e-4);
    Rng data(23);
    std::vector<Trajectory> batch;
    for (int e = 0; e < 3; ++e) {
      Trajectory t = rollout_traj(slot, 40, data);
      compute_advantages(t, 0.9, 0.95);
      batch.push_back(std::move(t));
    }
    PpoConfig cfg;
    Rng shuffle(seed);
    ppo_update(slot, batch, cfg, shuffle);
    return slot_hash(slot);
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("one small gradient step does not decrease the frozen-batch surrogate") {
  Rng rng(29);
  PolicySlot slot = make_policy_slot(3, 6, {16}, rng, 1e-4);
  Rng data(31);
  std::vector<Trajectory> batch;
  for (int e = 0; e < 4; ++e) {
    Trajectory t;
    for (int i = 0; i < 30; ++i) {
      std::vector<double> obs{uniform(data, 0, 1), uniform(data, 0, 1),
                              uniform(data, 0, 1)};
      const auto logits = forward(slot.actor, obs);
      double lp;
      const int a = sample_categorical(logits, data, &lp);
      t.obs.push_back(obs);
      t.actions.push_back(a);
      t.logp.push_back(lp);
      t.values.push_back(forward(slot.critic, obs)[0]);
      t.rewards.push_back(uniform(data, -1, 1));
    }
    compute_advantages(t, 0.9, 0.95);
    batch.push_back(std::move(t));
  }
  PpoConfig cfg;
  cfg.ent_coef = 0.0;
  cfg.epochs = 1;
  cfg.minibatch = 1 << 20;  // single full-batch step
  const double before = surrogate_objective(slot, batch, cfg.clip);
  Rng shuffle(3);
  ppo_update(slot, batch, cfg, shuffle);
  const double after = surrogate_objective(slot, batch, cfg.clip);
  CHECK(after >= before - 1e-9);
}

TEST_CASE("ppo_update reports stats and per-epoch rows") {
  Rng rng(37);
  PolicySlot slot = make_policy_slot(2, 3, {8}, rng, 1e-4);
  Rng data(41);
  Trajectory t = rollout_traj(slot, 64, data);
  compute_advantages(t, 0.9, 0.95);
  PpoConfig cfg;
  cfg.epochs = 4;
  Rng shuffle(5);
  const UpdateStats stats = ppo_update(slot, {t}, cfg, shuffle);
  CHECK(stats.samples == 64);
  CHECK(stats.epochs.size() == 4);
  CHECK(stats.clip_fraction >= 0.0);
  CHECK(stats.clip_fraction <= 1.0);
  CHECK(std::isfinite(stats.policy_loss));
  CHECK(stats.mean_ratio == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("empty batch is rejected") {
  Rng rng(43);
  PolicySlot slot = make_policy_slot(2, 3, {8}, rng, 1e-4);
  PpoConfig cfg;
  Rng shuffle(6);
  CHECK_THROWS_AS(ppo_update(slot, {}, cfg, shuffle), std::invalid_argument);
}
