#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "softctl/errors.hpp"
#include "softctl/mdp.hpp"
#include "softctl/numerics.hpp"

namespace softctl {

/// Largest (S*A)^T the enumeration oracle accepts.
inline constexpr double kEnumerationBudget = 1e7;

/// An exact distribution over dynamics-feasible length-T trajectories.
///
/// Entries are stored flat, in interleaved lexicographic order
/// (s_1, a_1, s_2, a_2, ...), which is also Trajectory::operator< order.
class TrajectoryDistribution {
 public:
  TrajectoryDistribution() = default;

  std::size_t horizon() const { return horizon_; }
  std::size_t size() const { return log_prob_.size(); }

  Trajectory trajectory(std::size_t i) const {
    Trajectory tau;
    tau.states.resize(horizon_);
    tau.actions.resize(horizon_);
    const std::uint32_t* code = codes_.data() + i * 2 * horizon_;
    for (std::size_t t = 0; t < horizon_; ++t) {
      tau.states[t] = code[2 * t];
      tau.actions[t] = code[2 * t + 1];
    }
    return tau;
  }
  std::size_t state_at(std::size_t i, std::size_t t) const { return codes_[i * 2 * horizon_ + 2 * t]; }
  std::size_t action_at(std::size_t i, std::size_t t) const { return codes_[i * 2 * horizon_ + 2 * t + 1]; }

  double log_probability(std::size_t i) const { return log_prob_[i]; }
  double probability(std::size_t i) const { return std::exp(log_prob_[i]); }

  /// Index of tau in the support, or size() if absent.
  std::size_t find(const Trajectory& tau) const {
    std::vector<std::uint32_t> key(2 * horizon_);
    if (tau.states.size() != horizon_ || tau.actions.size() != horizon_) return size();
    for (std::size_t t = 0; t < horizon_; ++t) {
      key[2 * t] = static_cast<std::uint32_t>(tau.states[t]);
      key[2 * t + 1] = static_cast<std::uint32_t>(tau.actions[t]);
    }
    return find_code(key.data());
  }
  double probability(const Trajectory& tau) const {
    const std::size_t i = find(tau);
    return i == size() ? 0.0 : probability(i);
  }

  double total_mass() const {
    double m = 0.0;
    for (double lp : log_prob_) m += std::exp(lp);
    return m;
  }

  /// log of the normalizer that was divided out of the weights.
  double log_normalizer() const { return log_normalizer_; }

  /// Builds a normalized distribution from unnormalized log weights. Entries
  /// with weight -inf are dropped; codes must already be in sorted order.
  static TrajectoryDistribution from_log_weights(std::size_t horizon, const std::vector<std::uint32_t>& codes,
                                                 const std::vector<double>& log_w) {
    TrajectoryDistribution d;
    d.horizon_ = horizon;
    d.log_normalizer_ = log_sum_exp(log_w);
    for (std::size_t i = 0; i < log_w.size(); ++i) {
      if (log_w[i] == kNegInf) continue;
      d.codes_.insert(d.codes_.end(), codes.begin() + i * 2 * horizon, codes.begin() + (i + 1) * 2 * horizon);
      d.log_prob_.push_back(log_w[i] - d.log_normalizer_);
    }
    return d;
  }

  const std::uint32_t* code(std::size_t i) const { return codes_.data() + i * 2 * horizon_; }

  std::size_t find_code(const std::uint32_t* key) const {
    std::size_t lo = 0, hi = size();
    const std::size_t w = 2 * horizon_;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (std::lexicographical_compare(code(mid), code(mid) + w, key, key + w))
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < size() && std::equal(code(lo), code(lo) + w, key)) return lo;
    return size();
  }

 private:
  std::size_t horizon_ = 0;
  std::vector<std::uint32_t> codes_;
  std::vector<double> log_prob_;
  double log_normalizer_ = 0.0;
};

/// Posterior over trajectories plus the evidence log p(O_{1:T}) of the model
/// with a uniform action prior p(a|s) = 1/|A|.
struct PosteriorResult {
  TrajectoryDistribution distribution;
  double log_evidence = 0.0;
};

namespace detail {

inline void check_enumerable(const TabularMDP& m) {
  const double per_step = static_cast<double>(m.num_states) * static_cast<double>(m.num_actions);
  const double count = std::pow(per_step, static_cast<double>(m.horizon));
  if (!(count <= kEnumerationBudget))
    throw CapacityError("enumeration needs (S*A)^T = " + std::to_string(count) + " > 1e7 trajectories");
}

/// Depth-first enumeration of feasible trajectories in interleaved
/// lexicographic order. `step_log_weight(t, s, a)` supplies the per-step
/// log factor; dynamics and initial-state factors are added here.
template <class StepLogWeight>
void enumerate_feasible(const TabularMDP& m, StepLogWeight&& step_log_weight, std::vector<std::uint32_t>& codes,
                        std::vector<double>& log_w) {
  const std::size_t T = m.horizon, S = m.num_states, A = m.num_actions;
  std::vector<std::uint32_t> path(2 * T);
  auto recurse = [&](auto&& self, std::size_t t, std::size_t s, double acc) -> void {
    path[2 * t] = static_cast<std::uint32_t>(s);
    for (std::size_t a = 0; a < A; ++a) {
      path[2 * t + 1] = static_cast<std::uint32_t>(a);
      const double here = acc + step_log_weight(t, s, a);
      if (t + 1 == T) {
        codes.insert(codes.end(), path.begin(), path.end());
        log_w.push_back(here);
        continue;
      }
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        const double p = m.transition(s, a, s2);
        if (p > 0.0) self(self, t + 1, s2, here + std::log(p));
      }
    }
  };
  for (std::size_t s = 0; s < S; ++s)
    if (m.initial_dist[s] > 0.0) recurse(recurse, 0, s, std::log(m.initial_dist[s]));
}

}  // namespace detail

/// p(tau | O_{1:T}) proportional to [p(s_1) prod p(s'|s,a)] exp(sum r), by
/// exhaustive enumeration. Throws CapacityError beyond the budget.
inline PosteriorResult posterior_trajectory_distribution(const TabularMDP& m) {
  require_valid(m);
  detail::check_enumerable(m);
  std::vector<std::uint32_t> codes;
  std::vector<double> log_w;
  detail::enumerate_feasible(m, [&](std::size_t, std::size_t s, std::size_t a) { return m.reward(s, a); }, codes, log_w);
  PosteriorResult out;
  out.distribution = TrajectoryDistribution::from_log_weights(m.horizon, codes, log_w);
  out.log_evidence = out.distribution.log_normalizer() -
                     static_cast<double>(m.horizon) * std::log(static_cast<double>(m.num_actions));
  return out;
}

/// q(tau) = p(s_1) prod_t pi(a_t|s_t) p(s_{t+1}|s_t,a_t): the trajectory
/// distribution of a policy under the true dynamics.
inline TrajectoryDistribution policy_trajectory_distribution(const TabularMDP& m, const Policy& pi) {
  require_valid(m);
  validate_policy(m, pi);
  detail::check_enumerable(m);
  std::vector<std::uint32_t> codes;
  std::vector<double> log_w;
  detail::enumerate_feasible(
      m, [&](std::size_t t, std::size_t s, std::size_t a) { return std::log(pi(t, s, a)); }, codes, log_w);
  return TrajectoryDistribution::from_log_weights(m.horizon, codes, log_w);
}

/// Per-timestep conditionals with an explicit definedness mask; rows at
/// states with zero marginal are NaN and flagged undefined.
struct ConditionalPolicy {
  Policy table;
  Table2<std::uint8_t> defined;
  bool is_defined(std::size_t t, std::size_t s) const { return defined(t, s) != 0; }
};

/// p(a_t | s_t, O_{1:T}) by marginalizing the posterior over trajectories.
inline ConditionalPolicy posterior_policy_by_marginalization(const TabularMDP& m) {
  const auto post = posterior_trajectory_distribution(m);
  const auto& d = post.distribution;
  const std::size_t T = m.horizon, S = m.num_states, A = m.num_actions;
  Policy joint(T, S, A, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double p = d.probability(i);
    for (std::size_t t = 0; t < T; ++t) joint(t, d.state_at(i, t), d.action_at(i, t)) += p;
  }
  ConditionalPolicy out{Policy(T, S, A), Table2<std::uint8_t>(T, S, 0)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double marginal = 0.0;
      for (std::size_t a = 0; a < A; ++a) marginal += joint(t, s, a);
      if (marginal > 0.0) {
        out.defined(t, s) = 1;
        for (std::size_t a = 0; a < A; ++a) out.table(t, s, a) = joint(t, s, a) / marginal;
      } else {
        for (std::size_t a = 0; a < A; ++a) out.table(t, s, a) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return out;
}

/// D_KL(approx || target) = sum_tau approx(tau) (log approx(tau) - log target(tau)).
/// Throws AbsoluteContinuityError if approx has mass outside target's support.
inline double kl_trajectory(const TrajectoryDistribution& target, const TrajectoryDistribution& approx) {
  if (target.horizon() != approx.horizon()) throw std::invalid_argument("kl_trajectory: horizon mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double lq = approx.log_probability(i);
    if (lq == kNegInf) continue;
    const std::size_t j = target.find_code(approx.code(i));
    if (j == target.size())
      throw AbsoluteContinuityError("kl_trajectory: approx puts mass on a trajectory outside the target support");
    kl += std::exp(lq) * (lq - target.log_probability(j));
  }
  return kl;
}

/// sum_t E[r(s_t, a_t)] + E[H(pi(.|s_t))], with state marginals propagated
/// forward under the true dynamics.
inline double maxent_objective_by_decomposition(const TabularMDP& m, const Policy& pi) {
  require_valid(m);
  validate_policy(m, pi);
  const auto mu = state_marginals(m, pi);
  double total = 0.0;
  for (std::size_t t = 0; t < m.horizon; ++t) {
    for (std::size_t s = 0; s < m.num_states; ++s) {
      const double ms = mu(t, s);
      if (ms == 0.0) continue;
      double expected_r = 0.0;
      for (std::size_t a = 0; a < m.num_actions; ++a) expected_r += pi(t, s, a) * m.reward(s, a);
      total += ms * (expected_r + entropy(pi.row(t, s)));
    }
  }
  return total;
}

/// E_q[log p(s_1) + sum_t (r + log p(s_{t+1}|s_t,a_t))] + H(q): the
/// trajectory-level objective against the unnormalized joint with counting
/// measure over actions. It equals log Z - KL(q || posterior), where
/// log Z = log_evidence + T log|A|. Only evaluated, never optimized.
inline double trajectory_level_objective(const TabularMDP& m, const TrajectoryDistribution& approx) {
  double total = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double lq = approx.log_probability(i);
    if (lq == kNegInf) continue;
    const Trajectory tau = approx.trajectory(i);
    const double log_joint = trajectory_dynamics_log_prob(m, tau) + trajectory_return(m, tau);
    total += std::exp(lq) * (log_joint - lq);
  }
  return total;
}

}  // namespace softctl
