#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "softctl/action_prior.hpp"
#include "softctl/errors.hpp"
#include "softctl/mdp.hpp"
#include "softctl/numerics.hpp"

namespace softctl {

/// Soft Q and V tables of the fixed-dynamics (variational) problem.
///   v(t, s) = logsumexp_a q(t, s, a) + prior offset,  q(T-1, s, a) = r(s, a).
struct SoftValueTables {
  Table3<double> q;
  Table2<double> v;
  ActionPrior prior = ActionPrior::counting;
};

/// The maximum-entropy policy pi(a|s) = exp(q - v) (counting convention).
using MaxEntPolicy = Policy;

/// Q(s, a) = r(s, a) + E_{s'}[V(s')]: expectation in value space.
inline Table2<double> soft_bellman_backup(const TabularMDP& m, std::span<const double> v_next) {
  Table2<double> q(m.num_states, m.num_actions);
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      double ev = 0.0;
      const auto row = m.next_dist(s, a);
      for (std::size_t s2 = 0; s2 < m.num_states; ++s2)
        if (row[s2] > 0.0) ev += row[s2] * v_next[s2];
      q(s, a) = m.reward(s, a) + ev;
    }
  }
  return q;
}

namespace detail {
inline double soft_max_row(std::span<const double> q_row, double offset) {
  const double v = log_sum_exp(q_row);
  if (!std::isfinite(v)) throw InvalidMdpError("soft value is not finite; rewards must be finite");
  return v + offset;
}
}  // namespace detail

/// Exact finite-horizon soft value iteration, backward from the base case.
inline SoftValueTables soft_value_iteration(const TabularMDP& m, ActionPrior prior = ActionPrior::counting) {
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  const double offset = action_prior_offset(prior, A);
  SoftValueTables tab{Table3<double>(T, S, A), Table2<double>(T, S), prior};
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = T - 1 - k;
    if (t == T - 1) {
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) tab.q(t, s, a) = m.reward(s, a);
    } else {
      tab.q.set_slice(t, soft_bellman_backup(m, tab.v.row(t + 1)));
    }
    for (std::size_t s = 0; s < S; ++s) tab.v(t, s) = detail::soft_max_row(tab.q.row(t, s), offset);
  }
  return tab;
}

/// pi(t, s, a) = exp(q - v) with the prior offset removed; q - v <= 0 so
/// nothing overflows.
inline MaxEntPolicy extract_policy(const SoftValueTables& tab) {
  const std::size_t T = tab.q.dim0(), S = tab.q.dim1(), A = tab.q.dim2();
  const double offset = action_prior_offset(tab.prior, A);
  MaxEntPolicy pi(T, S, A);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) pi(t, s, a) = std::exp(tab.q(t, s, a) - (tab.v(t, s) - offset));
  return pi;
}

/// E_q[sum_t r(s_t, a_t) - log q(a_t | s_t)] under the true dynamics and p(s_1).
///
/// Evaluated by a backward policy-evaluation pass, independently of the
/// forward-marginal route used by the enumeration oracle.
inline double elbo(const TabularMDP& m, const Policy& pi) {
  require_valid(m);
  validate_policy(m, pi);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  std::vector<double> v_next(S, 0.0), v(S, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = T - 1 - k;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double p = pi(t, s, a);
        if (p == 0.0) continue;
        double cont = 0.0;
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) cont += row[s2] * v_next[s2];
        }
        acc += p * (m.reward(s, a) - std::log(p) + cont);
      }
      v[s] = acc;
    }
    std::swap(v, v_next);
  }
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) total += m.initial_dist[s] * v_next[s];
  return total;
}

/// Stationary soft values for infinite-horizon problems.
struct StationarySolution {
  Table2<double> q;          // S' x A
  std::vector<double> v;     // S'
  Table2<double> policy;     // S' x A
  std::size_t iterations = 0;
  bool converged = false;
  double final_change = 0.0;
  bool has_absorbing_state = false;  // true when discount < 1: last state is the absorbing one
};

/// Iterates the soft backup on a single (q, v) pair until the sup-norm change
/// drops below convergence_tol or max_iters sweeps elapse.
///
/// With discount < 1 the MDP is first passed through apply_discount_transform.
/// The absorbing state is terminal, so its value is pinned to 0; otherwise the
/// counting-measure entropy bonus would accumulate there without bound.
/// Temperature is applied by reward scaling and the returned values are
/// rescaled by it, so q and v are in reward units.
inline StationarySolution soft_value_iteration_stationary(const TabularMDP& original, const SolverConfig& cfg,
                                                          ActionPrior prior = ActionPrior::counting) {
  cfg.validate();
  require_valid(original);
  const TabularMDP scaled = apply_temperature(original, cfg.temperature);
  const bool discounted = cfg.discount < 1.0;
  const TabularMDP m = discounted ? apply_discount_transform(scaled, cfg.discount) : scaled;
  const std::size_t S = m.num_states, A = m.num_actions;
  const double offset = action_prior_offset(prior, A);

  StationarySolution sol;
  sol.has_absorbing_state = discounted;
  sol.v.assign(S, 0.0);
  sol.q = Table2<double>(S, A);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    sol.q = soft_bellman_backup(m, sol.v);
    double change = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double nv = (discounted && s == S - 1) ? 0.0 : detail::soft_max_row(sol.q.row(s), offset);
      change = std::max(change, std::abs(nv - sol.v[s]));
      sol.v[s] = nv;
    }
    sol.iterations = it + 1;
    sol.final_change = change;
    if (!std::isfinite(change)) throw DivergenceError("stationary soft value iteration produced non-finite values");
    if (change < cfg.convergence_tol) {
      sol.converged = true;
      break;
    }
  }
  sol.q = soft_bellman_backup(m, sol.v);
  sol.policy = Table2<double>(S, A);
  for (std::size_t s = 0; s < S; ++s) softmax(sol.q.row(s), sol.policy.row(s));
  for (auto& x : sol.q.data()) x *= cfg.temperature;
  for (auto& x : sol.v) x *= cfg.temperature;
  return sol;
}

}  // namespace softctl
