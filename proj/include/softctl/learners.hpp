#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "softctl/mdp.hpp"
#include "softctl/numerics.hpp"
#include "softctl/soft_solver.hpp"

namespace softctl {

// ---------------------------------------------------------------------------
// Parameter types

/// Tabular softmax policy: pi(t, s, .) = softmax(logits(t, s, .)).
struct PolicyParams {
  Table3<double> logits;

  static PolicyParams uniform(const TabularMDP& m) {
    return {Table3<double>(m.horizon, m.num_states, m.num_actions, 0.0)};
  }
  /// logits = log pi, so policy() reproduces pi (rows must be strictly positive).
  static PolicyParams from_policy(const Policy& pi) {
    PolicyParams p{pi};
    for (auto& x : p.logits.data()) x = std::log(x);
    return p;
  }
  Policy policy() const {
    Policy pi(logits.dim0(), logits.dim1(), logits.dim2());
    for (std::size_t t = 0; t < logits.dim0(); ++t)
      for (std::size_t s = 0; s < logits.dim1(); ++s) softmax(logits.row(t, s), pi.row(t, s));
    return pi;
  }
};

/// Tabular critic: Q_phi(t, s, a) and V_psi(t, s).
struct CriticParams {
  Table3<double> q_table;
  Table2<double> v_table;

  static CriticParams zeros(const TabularMDP& m) {
    return {Table3<double>(m.horizon, m.num_states, m.num_actions, 0.0), Table2<double>(m.horizon, m.num_states, 0.0)};
  }
};

enum class EstimatorKind { exact_expectation, monte_carlo };

struct GradientEstimate {
  Table3<double> wrt_logits;
  EstimatorKind estimator_kind = EstimatorKind::exact_expectation;
  std::size_t num_samples = 0;
  /// Componentwise standard error of the mean; all zeros in exact mode.
  Table3<double> std_error;
};

struct GradientOptions {
  EstimatorKind kind = EstimatorKind::exact_expectation;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  /// Worker threads for sampling; 0 means hardware concurrency. Results do
  /// not depend on this value.
  std::size_t threads = 1;
  /// State-dependent baseline b(t, s); zeros when absent.
  std::optional<Table2<double>> baseline;
};

// ---------------------------------------------------------------------------
// Policy evaluation

/// On-policy soft evaluation of pi:
///   Q(t,s,a) = r(s,a) + E_{s'} V(t+1,s'),  V(t,s) = E_a[Q(t,s,a) - log pi(a|s)].
inline CriticParams on_policy_soft_evaluation(const TabularMDP& m, const Policy& pi) {
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  CriticParams c = CriticParams::zeros(m);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = T - 1 - k;
    for (std::size_t s = 0; s < S; ++s) {
      double v = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        double q = m.reward(s, a);
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) q += row[s2] * c.v_table(t + 1, s2);
        }
        c.q_table(t, s, a) = q;
        const double p = pi(t, s, a);
        if (p > 0.0) v += p * (q - std::log(p));
      }
      c.v_table(t, s) = v;
    }
  }
  return c;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform in [0, 1) with 53 random bits; independent of the standard
/// library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs body(chunk) for chunk in [0, n_chunks) across up to `threads` workers
/// with a static assignment. Callers write per-chunk results, so the merge
/// order is fixed regardless of scheduling.
inline void parallel_chunks(std::size_t n_chunks, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n_chunks, 1));
  if (threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) body(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < n_chunks; c += threads) body(c);
    });
  for (auto& th : pool) th.join();
}

inline Table2<double> baseline_or_zeros(const TabularMDP& m, const std::optional<Table2<double>>& b) {
  if (!b) return Table2<double>(m.horizon, m.num_states, 0.0);
  if (b->rows() != m.horizon || b->cols() != m.num_states) throw std::invalid_argument("baseline must be T x S");
  return *b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Max-ent policy gradient

/// Gradient of J(theta) = sum_t E[r(s_t,a_t) + H(pi(.|s_t))] w.r.t. the logits,
/// in the likelihood-ratio form with -log pi added to each reward:
///   sum_t E[ grad log pi(a_t|s_t) (sum_{t'>=t} (r - log pi) - b(s_t)) ].
///
/// Exact mode evaluates the expectation with forward state marginals and the
/// on-policy soft Q; the baseline is applied explicitly and cancels only
/// through the arithmetic. Monte-carlo mode samples trajectories in chunks of
/// 1024, each with its own counter-derived RNG stream.
inline GradientEstimate maxent_policy_gradient(const TabularMDP& m, const PolicyParams& theta,
                                               const GradientOptions& opts = {}) {
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  if (theta.logits.dim0() != T || theta.logits.dim1() != S || theta.logits.dim2() != A)
    throw std::invalid_argument("policy logits shape does not match MDP");
  const Policy pi = theta.policy();
  const Table2<double> b = detail::baseline_or_zeros(m, opts.baseline);

  GradientEstimate g;
  g.estimator_kind = opts.kind;
  g.wrt_logits = Table3<double>(T, S, A, 0.0);
  g.std_error = Table3<double>(T, S, A, 0.0);

  if (opts.kind == EstimatorKind::exact_expectation) {
    const auto mu = state_marginals(m, pi);
    const auto eval = on_policy_soft_evaluation(m, pi);
    std::vector<double> adv(A);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        if (mu(t, s) == 0.0) continue;
        double mean_adv = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
          const double p = pi(t, s, a);
          adv[a] = p > 0.0 ? eval.q_table(t, s, a) - std::log(p) - b(t, s) : 0.0;
          mean_adv += p * adv[a];
        }
        for (std::size_t a = 0; a < A; ++a) g.wrt_logits(t, s, a) = mu(t, s) * pi(t, s, a) * (adv[a] - mean_adv);
      }
    }
    return g;
  }

  if (opts.samples == 0) throw std::invalid_argument("monte-carlo gradient needs at least one sample");
  g.num_samples = opts.samples;
  constexpr std::size_t kChunk = 1024;
  const std::size_t n_chunks = (opts.samples + kChunk - 1) / kChunk;
  const std::size_t width = T * S * A;
  std::vector<std::vector<double>> sums(n_chunks), sumsqs(n_chunks);

  detail::parallel_chunks(n_chunks, opts.threads, [&](std::size_t c) {
    std::mt19937_64 rng(detail::splitmix64(opts.seed ^ detail::splitmix64(c + 1)));
    std::vector<double> sum(width, 0.0), sumsq(width, 0.0);
    std::vector<std::size_t> states(T), actions(T);
    std::vector<double> modified(T);
    const std::size_t begin = c * kChunk, end = std::min(opts.samples, begin + kChunk);
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t s = detail::sample_categorical(m.initial_dist, rng);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t a = detail::sample_categorical(pi.row(t, s), rng);
        states[t] = s;
        actions[t] = a;
        modified[t] = m.reward(s, a) - std::log(pi(t, s, a));
        if (t + 1 < T) s = detail::sample_categorical(m.next_dist(s, a), rng);
      }
      double to_go = 0.0;
      for (std::size_t k = 0; k < T; ++k) {
        const std::size_t t = T - 1 - k;
        to_go += modified[t];
        const std::size_t st = states[t];
        const double weight = to_go - b(t, st);
        for (std::size_t a = 0; a < A; ++a) {
          const double score = (a == actions[t] ? 1.0 : 0.0) - pi(t, st, a);
          const double x = score * weight;
          const std::size_t idx = (t * S + st) * A + a;
          sum[idx] += x;
          sumsq[idx] += x * x;
        }
      }
    }
    sums[c] = std::move(sum);
    sumsqs[c] = std::move(sumsq);
  });

  std::vector<double> total(width, 0.0), total_sq(width, 0.0);
  for (std::size_t c = 0; c < n_chunks; ++c)
    for (std::size_t i = 0; i < width; ++i) {
      total[i] += sums[c][i];
      total_sq[i] += sumsqs[c][i];
    }
  const double n = static_cast<double>(opts.samples);
  for (std::size_t i = 0; i < width; ++i) {
    const double mean = total[i] / n;
    g.wrt_logits.data()[i] = mean;
    if (opts.samples > 1) {
      const double var = std::max(0.0, (total_sq[i] - n * mean * mean) / (n - 1.0));
      g.std_error.data()[i] = std::sqrt(var / n);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Actor-critic

struct CriticLosses {
  double q_loss = 0.0;  // E(phi)
  double v_loss = 0.0;  // E(psi)
};

/// Squared Bellman errors of the critic under the forward marginals of pi_theta:
///   E(phi) = sum_t E_{s,a}[(r + E_{s'} V_psi(t+1, s') - Q_phi(t, s, a))^2]
///   E(psi) = sum_t E_s[(E_a[Q_phi - log pi] - V_psi(t, s))^2]
/// with V_psi(T, .) = 0.
inline CriticLosses critic_losses(const TabularMDP& m, const PolicyParams& theta, const CriticParams& critic) {
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  const Policy pi = theta.policy();
  const auto mu = state_marginals(m, pi);
  CriticLosses out;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      if (mu(t, s) == 0.0) continue;
      double soft_v = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double p = pi(t, s, a);
        if (p == 0.0) continue;
        double target = m.reward(s, a);
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) target += row[s2] * critic.v_table(t + 1, s2);
        }
        const double err = target - critic.q_table(t, s, a);
        out.q_loss += mu(t, s) * p * err * err;
        soft_v += p * (critic.q_table(t, s, a) - std::log(p));
      }
      const double verr = soft_v - critic.v_table(t, s);
      out.v_loss += mu(t, s) * verr * verr;
    }
  }
  return out;
}

struct ActorCriticState {
  PolicyParams theta;
  CriticParams critic;
};

/// One simultaneous update: gradient descent on both critic losses (targets
/// held fixed) and gradient ascent on E_s E_a[Q_phi - log pi] for the actor
/// with baseline V_psi. All expectations are exact over forward marginals.
inline ActorCriticState actor_critic_step(const TabularMDP& m, const PolicyParams& theta, const CriticParams& critic,
                                          double actor_rate, double critic_rate) {
  if (!(actor_rate > 0.0) || !(critic_rate > 0.0)) throw std::invalid_argument("actor-critic rates must be positive");
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  const Policy pi = theta.policy();
  const auto mu = state_marginals(m, pi);
  ActorCriticState next{theta, critic};
  std::vector<double> adv(A);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double ms = mu(t, s);
      if (ms == 0.0) continue;
      double soft_v = 0.0, mean_adv = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const double p = pi(t, s, a);
        double target = m.reward(s, a);
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) target += row[s2] * critic.v_table(t + 1, s2);
        }
        // dE(phi)/dQ = -2 mu pi (target - Q)
        next.critic.q_table(t, s, a) += critic_rate * 2.0 * ms * p * (target - critic.q_table(t, s, a));
        adv[a] = p > 0.0 ? critic.q_table(t, s, a) - std::log(p) - critic.v_table(t, s) : 0.0;
        mean_adv += p * adv[a];
        if (p > 0.0) soft_v += p * (critic.q_table(t, s, a) - std::log(p));
      }
      next.critic.v_table(t, s) += critic_rate * 2.0 * ms * (soft_v - critic.v_table(t, s));
      for (std::size_t a = 0; a < A; ++a)
        next.theta.logits(t, s, a) += actor_rate * ms * pi(t, s, a) * (adv[a] - mean_adv);
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Soft Q-learning

enum class TargetKind { soft, hard };

/// r(s, a) + E_{s'}[max-op_{a'} q_next(s', a')] where max-op is logsumexp
/// (soft) or max (hard). Pass an empty q_next for the final step.
inline double q_learning_target(const TabularMDP& m, const Table2<double>& q_next, std::size_t s, std::size_t a,
                                TargetKind kind = TargetKind::soft) {
  double target = m.reward(s, a);
  if (q_next.size() == 0) return target;
  const auto row = m.next_dist(s, a);
  for (std::size_t s2 = 0; s2 < m.num_states; ++s2) {
    if (row[s2] == 0.0) continue;
    const auto qn = q_next.row(s2);
    const double v = kind == TargetKind::soft ? log_sum_exp(qn) : *std::max_element(qn.begin(), qn.end());
    target += row[s2] * v;
  }
  return target;
}

/// Called after each sweep with (sweep index, max |Q - target| before the update).
using SweepObserver = std::function<void(std::size_t, double)>;

/// Synchronous soft Q-learning sweeps phi <- phi - rate (Q_phi - target) over
/// every (t, s, a), visiting t backward so targets at t use the already
/// updated slice t+1. With rate = 1 one sweep reproduces soft value iteration.
/// The returned v_table holds the implicit V = logsumexp_a Q.
inline CriticParams soft_q_learning(const TabularMDP& m, const CriticParams& init, double rate, std::size_t sweeps,
                                    const SweepObserver& observer = {}) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("soft Q-learning rate must lie in (0, 1]");
  if (sweeps == 0) throw std::invalid_argument("soft Q-learning needs at least one sweep");
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  CriticParams phi = init;
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    double residual = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
      const std::size_t t = T - 1 - k;
      const Table2<double> q_next = t + 1 < T ? phi.q_table.slice(t + 1) : Table2<double>();
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
          const double err = phi.q_table(t, s, a) - q_learning_target(m, q_next, s, a, TargetKind::soft);
          residual = std::max(residual, std::abs(err));
          phi.q_table(t, s, a) -= rate * err;
        }
    }
    if (observer) observer(sweep, residual);
  }
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) phi.v_table(t, s) = log_sum_exp(phi.q_table.row(t, s));
  return phi;
}

// ---------------------------------------------------------------------------
// Soft Q-learning / policy-gradient equivalence

struct SqlPgGradients {
  /// Policy gradient w.r.t. phi plus the value Bellman-error term.
  Table3<double> policy_side;
  /// E[grad_phi Q(s,a) A_hat] with A_hat = r + E V(s') - injected baseline.
  Table3<double> soft_q_side;
};

/// Both gradient expressions for the implicit policy exp(Q_phi - V), V = logsumexp Q_phi,
/// evaluated exactly over the forward marginals of that policy. Gradients
/// treat the advantage target as fixed. `soft_q_baseline` (T x S) is
/// subtracted from the soft Q-learning side only; the identity holds for a
/// zero baseline.
inline SqlPgGradients sql_pg_gradients(const TabularMDP& m, const Table3<double>& q_phi,
                                       const std::optional<Table2<double>>& soft_q_baseline = std::nullopt) {
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  if (q_phi.dim0() != T || q_phi.dim1() != S || q_phi.dim2() != A) throw std::invalid_argument("Q table shape mismatch");
  const Table2<double> b = detail::baseline_or_zeros(m, soft_q_baseline);

  Policy pi(T, S, A);
  Table2<double> v(T, S);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      softmax(q_phi.row(t, s), pi.row(t, s));
      v(t, s) = log_sum_exp(q_phi.row(t, s));
    }
  const auto mu = state_marginals(m, pi);

  SqlPgGradients out{Table3<double>(T, S, A, 0.0), Table3<double>(T, S, A, 0.0)};
  std::vector<double> q_hat(A);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double ms = mu(t, s);
      if (ms == 0.0) continue;
      // Non-baselined return estimate Q_hat = r + E_{s'} V(s'); the advantage
      // used in both expressions takes the same value.
      double mean_q_hat = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        double target = m.reward(s, a);
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2) target += row[s2] * v(t + 1, s2);
        }
        q_hat[a] = target;
        mean_q_hat += pi(t, s, a) * target;
      }
      for (std::size_t a = 0; a < A; ++a) {
        const double p = pi(t, s, a);
        // E_a'[(dQ(a')/dphi - dV/dphi) A(a')], with dV/dphi_a = pi(a).
        const double pg = ms * (p * q_hat[a] - p * mean_q_hat);
        // dV/dphi_a * E_a'[Q_hat(a')]
        const double value_term = ms * p * mean_q_hat;
        out.policy_side(t, s, a) = pg + value_term;
        out.soft_q_side(t, s, a) = ms * p * (q_hat[a] - b(t, s));
      }
    }
  }
  return out;
}

/// Max componentwise |policy_side - soft_q_side|.
inline double sql_pg_equivalence_check(const TabularMDP& m, const CriticParams& phi,
                                       const std::optional<Table2<double>>& soft_q_baseline = std::nullopt) {
  const auto g = sql_pg_gradients(m, phi.q_table, soft_q_baseline);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.policy_side.size(); ++i)
    worst = std::max(worst, std::abs(g.policy_side.data()[i] - g.soft_q_side.data()[i]));
  return worst;
}

}  // namespace softctl
