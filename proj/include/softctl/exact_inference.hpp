#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "softctl/action_prior.hpp"
#include "softctl/mdp.hpp"
#include "softctl/numerics.hpp"

namespace softctl {

/// Log-domain backward messages of the optimality-variable model.
///
/// log_q(t, s, a) = log beta_t(s, a), log_v(t, s) = log beta_t(s).
/// Invariants: log_v(t, s) = logsumexp_a log_q(t, s, a) + prior offset, and
/// log_q(T-1, s, a) = r(s, a).
struct MessageTable {
  Table3<double> log_q;
  Table2<double> log_v;
  ActionPrior prior = ActionPrior::counting;
};

/// One step of the exact-inference backup:
///   Q(s, a) = r(s, a) + log E_{s' ~ p(.|s,a)} exp V(s').
/// The expectation is taken in probability space, so a single high-value
/// successor dominates regardless of its probability (risk-seeking).
inline Table2<double> optimistic_soft_backup(const TabularMDP& m, std::span<const double> log_v_next) {
  Table2<double> q(m.num_states, m.num_actions);
  for (std::size_t s = 0; s < m.num_states; ++s)
    for (std::size_t a = 0; a < m.num_actions; ++a)
      q(s, a) = m.reward(s, a) + log_sum_exp_weighted(m.next_dist(s, a), log_v_next);
  return q;
}

inline MessageTable backward_messages(const TabularMDP& m, ActionPrior prior = ActionPrior::counting) {
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  const double offset = action_prior_offset(prior, A);
  MessageTable msg{Table3<double>(T, S, A), Table2<double>(T, S), prior};
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = T - 1 - k;
    if (t == T - 1) {
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) msg.log_q(t, s, a) = m.reward(s, a);
    } else {
      msg.log_q.set_slice(t, optimistic_soft_backup(m, msg.log_v.row(t + 1)));
    }
    for (std::size_t s = 0; s < S; ++s) msg.log_v(t, s) = log_sum_exp(msg.log_q.row(t, s)) + offset;
  }
  return msg;
}

/// p(a_t | s_t, O_{t:T}) = beta_t(s, a) p(a|s) / beta_t(s). The prior offset
/// cancels, so this is a row-wise softmax of log_q under either convention.
inline Policy message_ratio_policy(const MessageTable& msg) {
  const std::size_t T = msg.log_q.dim0(), S = msg.log_q.dim1(), A = msg.log_q.dim2();
  const double offset = action_prior_offset(msg.prior, A);
  Policy pi(T, S, A);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) pi(t, s, a) = std::exp(msg.log_q(t, s, a) + offset - msg.log_v(t, s));
  return pi;
}

/// log sum_s p(s_1 = s) beta_1(s). Under the uniform prior this is log p(O_{1:T});
/// under counting it exceeds it by exactly T log|A|.
inline double log_evidence(const TabularMDP& m, const MessageTable& msg) {
  return log_sum_exp_weighted(m.initial_dist, msg.log_v.row(0));
}

}  // namespace softctl
