#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "test_support.hpp"

using namespace softctl;
using namespace softctl::testing;

namespace {

/// Unnormalized posterior weights by brute force over all (S*A)^T codes.
std::map<Trajectory, double> brute_force_weights(const TabularMDP& m) {
  std::map<Trajectory, double> w;
  for_each_trajectory(m, [&](const Trajectory& tau) {
    double p = m.initial_dist[tau.states[0]];
    for (std::size_t t = 0; t + 1 < m.horizon; ++t) p *= m.transition(tau.states[t], tau.actions[t], tau.states[t + 1]);
    if (p > 0.0) w[tau] = p * std::exp(trajectory_return(m, tau));
  });
  return w;
}

}  // namespace

TEST(PosteriorEnumeration, MatchesBruteForce) {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const TabularMDP m = random_mdp(rng, {.max_states = 3, .max_actions = 3, .max_horizon = 3});
    const auto post = posterior_trajectory_distribution(m);
    const auto ref = brute_force_weights(m);
    ASSERT_EQ(post.distribution.size(), ref.size());
    double z = 0.0;
    for (const auto& [tau, w] : ref) z += w;
    std::size_t i = 0;
    for (const auto& [tau, w] : ref) {
      // std::map order is Trajectory::operator<, so indices line up.
      EXPECT_EQ(post.distribution.trajectory(i), tau);
      EXPECT_NEAR(post.distribution.probability(i), w / z, 1e-13);
      ++i;
    }
    EXPECT_NEAR(post.log_evidence, std::log(z) - m.horizon * std::log(double(m.num_actions)), 1e-10);
    EXPECT_NEAR(post.distribution.total_mass(), 1.0, 1e-12);
  }
}

TEST(PosteriorEnumeration, LookupByTrajectory) {
  const TabularMDP m = risk_mdp();
  const auto post = posterior_trajectory_distribution(m);
  // s0 -safe-> s_safe, then either action: 2 paths; risky: 2 successors x 2 actions.
  EXPECT_EQ(post.distribution.size(), 6u);
  const Trajectory up{{0, 2}, {1, 0}};
  const Trajectory impossible{{0, 3}, {0, 0}};
  EXPECT_GT(post.distribution.probability(up), 0.4);
  EXPECT_EQ(post.distribution.probability(impossible), 0.0);
  EXPECT_EQ(post.distribution.find(impossible), post.distribution.size());
}

TEST(PosteriorEnumeration, CapacityGuard) {
  const TabularMDP m = TabularMDP::zeros(10, 10, 4);
  TabularMDP v = m;
  v.initial_dist[0] = 1.0;
  for (std::size_t s = 0; s < 10; ++s)
    for (std::size_t a = 0; a < 10; ++a) v.transition(s, a, s) = 1.0;
  EXPECT_THROW(posterior_trajectory_distribution(v), CapacityError);
  EXPECT_THROW(policy_trajectory_distribution(v, uniform_policy(v)), CapacityError);
}

TEST(PolicyDistribution, FactorizesAlongTrajectory) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMDP m = random_mdp(rng, {.max_states = 3, .max_actions = 3, .max_horizon = 3});
    const Policy pi = random_policy(rng, m);
    const auto d = policy_trajectory_distribution(m, pi);
    EXPECT_NEAR(d.total_mass(), 1.0, 1e-12);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Trajectory tau = d.trajectory(i);
      double p = std::exp(trajectory_dynamics_log_prob(m, tau));
      for (std::size_t t = 0; t < m.horizon; ++t) p *= pi(t, tau.states[t], tau.actions[t]);
      EXPECT_NEAR(d.probability(i), p, 1e-13);
    }
  }
}

TEST(ConditionalPolicy, UndefinedAtUnreachableStates) {
  const auto cp = posterior_policy_by_marginalization(risk_mdp());
  EXPECT_TRUE(cp.is_defined(0, 0));
  EXPECT_FALSE(cp.is_defined(0, 1));
  EXPECT_TRUE(std::isnan(cp.table(0, 1, 0)));
  EXPECT_TRUE(cp.is_defined(1, 2));
  EXPECT_FALSE(cp.is_defined(1, 0));
  for (std::size_t s = 1; s < 4; ++s) EXPECT_NEAR(cp.table(1, s, 0), 0.5, 1e-15);
}

TEST(TrajectoryKl, BasicProperties) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMDP m = random_mdp(rng, {.max_states = 3, .max_actions = 3, .max_horizon = 3});
    const auto post = posterior_trajectory_distribution(m).distribution;
    EXPECT_NEAR(kl_trajectory(post, post), 0.0, 1e-14);
    const auto q = policy_trajectory_distribution(m, random_policy(rng, m));
    EXPECT_GE(kl_trajectory(post, q), -1e-12);
  }
}

TEST(TrajectoryKl, RejectsSupportViolation) {
  TabularMDP m = risk_mdp();
  const auto q = policy_trajectory_distribution(m, uniform_policy(m));
  // Posterior of an MDP where the risky branch never reaches s-.
  TabularMDP n = m;
  n.transition(0, 1, 2) = 1.0;
  n.transition(0, 1, 3) = 0.0;
  const auto target = posterior_trajectory_distribution(n).distribution;
  EXPECT_THROW(kl_trajectory(target, q), AbsoluteContinuityError);
}

TEST(Objectives, ThreeRoutesAgree) {
  // Trajectory-level objective of q_pi, forward-marginal decomposition and
  // the backward ELBO all evaluate the same quantity.
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const TabularMDP m = random_mdp(rng);
    const Policy pi = random_policy(rng, m);
    const double by_marginals = maxent_objective_by_decomposition(m, pi);
    EXPECT_NEAR(by_marginals, elbo(m, pi), 1e-11);
    EXPECT_NEAR(trajectory_level_objective(m, policy_trajectory_distribution(m, pi)), by_marginals, 1e-11);
  }
}

TEST(Objectives, TrajectoryObjectiveIsLogZMinusKl) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMDP m = random_mdp(rng);
    const auto post = posterior_trajectory_distribution(m);
    const auto q = policy_trajectory_distribution(m, random_policy(rng, m));
    const double log_z = post.distribution.log_normalizer();
    EXPECT_NEAR(trajectory_level_objective(m, q), log_z - kl_trajectory(post.distribution, q), 1e-10);
    EXPECT_NEAR(post.log_evidence + m.horizon * std::log(double(m.num_actions)), log_z, 1e-12);
  }
}
