#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "softctl/errors.hpp"
#include "softctl/numerics.hpp"
#include "softctl/table.hpp"

namespace softctl {

inline constexpr double kStochasticTol = 1e-12;

/// Finite-horizon tabular MDP. Time is indexed 0..horizon-1 throughout the library.
///
/// transition(s, a, s') = p(s' | s, a), reward(s, a) = r(s, a). Rewards are
/// time-invariant and may have either sign (undirected-potential reading of
/// exp(r)). Values are plain data; every consumer validates before use.
struct TabularMDP {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t horizon = 0;
  std::vector<double> initial_dist;
  Table3<double> transition;
  Table2<double> reward;

  static TabularMDP zeros(std::size_t states, std::size_t actions, std::size_t horizon) {
    TabularMDP m;
    m.num_states = states;
    m.num_actions = actions;
    m.horizon = horizon;
    m.initial_dist.assign(states, 0.0);
    m.transition = Table3<double>(states, actions, states, 0.0);
    m.reward = Table2<double>(states, actions, 0.0);
    return m;
  }

  std::span<const double> next_dist(std::size_t s, std::size_t a) const { return transition.row(s, a); }
  double r(std::size_t s, std::size_t a) const { return reward(s, a); }
};

/// Temperature, discount and iteration controls shared by the solvers.
struct SolverConfig {
  double temperature = 1.0;
  double discount = 1.0;
  double convergence_tol = 1e-10;
  std::size_t max_iters = 100000;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must lie in (0, 1]");
    if (!(convergence_tol > 0.0)) throw std::invalid_argument("convergence_tol must be > 0");
    if (max_iters == 0) throw std::invalid_argument("max_iters must be positive");
  }
};

/// tau = (s_1, a_1, ..., s_T, a_T). Ordering is lexicographic on the
/// interleaved sequence, which is the order the enumeration oracle emits.
struct Trajectory {
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;

  bool operator==(const Trajectory&) const = default;
  bool operator<(const Trajectory& o) const {
    const std::size_t n = std::min(states.size(), o.states.size());
    for (std::size_t t = 0; t < n; ++t) {
      if (states[t] != o.states[t]) return states[t] < o.states[t];
      if (actions[t] != o.actions[t]) return actions[t] < o.actions[t];
    }
    return states.size() < o.states.size();
  }
};

/// Per-timestep action conditionals pi(t, s, a), shape T x S x A.
using Policy = Table3<double>;

struct Violation {
  std::string message;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.message;
    }
    return out;
  }
};

namespace detail {
inline std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}
}  // namespace detail

/// Reports every invariant violation; an empty report means the MDP is usable.
inline ValidationReport validate_mdp(const TabularMDP& m) {
  using detail::fmt_num;
  ValidationReport rep;
  auto add = [&](std::string msg, double residual) { rep.violations.push_back({std::move(msg), residual}); };

  if (m.num_states == 0) add("num_states must be positive", 0.0);
  if (m.num_actions == 0) add("num_actions must be positive", 0.0);
  if (m.horizon == 0) add("horizon must be positive", 0.0);
  const std::size_t S = m.num_states, A = m.num_actions;
  if (m.initial_dist.size() != S) {
    add("initial_dist has length " + std::to_string(m.initial_dist.size()) + ", expected " + std::to_string(S), 0.0);
  }
  if (m.transition.dim0() != S || m.transition.dim1() != A || m.transition.dim2() != S) add("transition shape mismatch", 0.0);
  if (m.reward.rows() != S || m.reward.cols() != A) add("reward shape mismatch", 0.0);
  if (!rep.ok()) return rep;

  double init_sum = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const double p = m.initial_dist[s];
    if (!(p >= 0.0 && p <= 1.0)) add("initial_dist[" + std::to_string(s) + "] = " + fmt_num(p) + " outside [0,1]", p);
    init_sum += p;
  }
  if (!(std::abs(init_sum - 1.0) <= kStochasticTol))
    add("initial_dist sums to " + fmt_num(init_sum) + " != 1", init_sum - 1.0);

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const std::string idx = "(" + std::to_string(s) + "," + std::to_string(a) + ")";
      double row_sum = 0.0;
      for (std::size_t s2 = 0; s2 < S; ++s2) {
        const double p = m.transition(s, a, s2);
        if (!(p >= 0.0 && p <= 1.0))
          add("transition" + idx + "[" + std::to_string(s2) + "] = " + fmt_num(p) + " outside [0,1]", p);
        row_sum += p;
      }
      if (!(std::abs(row_sum - 1.0) <= kStochasticTol))
        add("transition row " + idx + " sums to " + fmt_num(row_sum) + " != 1", row_sum - 1.0);
      if (!std::isfinite(m.reward(s, a))) add("reward" + idx + " is not finite", m.reward(s, a));
    }
  }
  return rep;
}

inline void require_valid(const TabularMDP& m) {
  const auto rep = validate_mdp(m);
  if (!rep.ok()) throw InvalidMdpError("invalid MDP: " + rep.summary());
}

/// Returns an MDP with one extra absorbing, zero-reward state (index S): every
/// original transition is scaled by gamma and the remaining 1 - gamma routes
/// to the absorbing state. gamma = 1 is the identity and is rejected here.
inline TabularMDP apply_discount_transform(const TabularMDP& m, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("discount transform requires gamma in (0, 1)");
  require_valid(m);
  const std::size_t S = m.num_states, A = m.num_actions;
  TabularMDP out = TabularMDP::zeros(S + 1, A, m.horizon);
  for (std::size_t s = 0; s < S; ++s) {
    out.initial_dist[s] = m.initial_dist[s];
    for (std::size_t a = 0; a < A; ++a) {
      out.reward(s, a) = m.reward(s, a);
      for (std::size_t s2 = 0; s2 < S; ++s2) out.transition(s, a, s2) = gamma * m.transition(s, a, s2);
      out.transition(s, a, S) = 1.0 - gamma;
    }
  }
  for (std::size_t a = 0; a < A; ++a) out.transition(S, a, S) = 1.0;
  return out;
}

/// Rewards divided by alpha. Soft values of the result, multiplied by alpha,
/// are the temperature-alpha soft values of the original MDP.
inline TabularMDP apply_temperature(const TabularMDP& m, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("temperature must be a positive finite number");
  TabularMDP out = m;
  for (auto& r : out.reward.data()) r /= alpha;
  return out;
}

inline void check_trajectory_indices(const TabularMDP& m, const Trajectory& tau) {
  if (tau.states.size() != m.horizon || tau.actions.size() != m.horizon)
    throw std::out_of_range("trajectory length does not match horizon " + std::to_string(m.horizon));
  for (std::size_t t = 0; t < m.horizon; ++t) {
    if (tau.states[t] >= m.num_states) throw std::out_of_range("state index out of range at t=" + std::to_string(t));
    if (tau.actions[t] >= m.num_actions) throw std::out_of_range("action index out of range at t=" + std::to_string(t));
  }
}

/// log p(s_1) + sum_{t<T} log p(s_{t+1} | s_t, a_t); -inf iff some factor is zero.
/// No factor is applied after the final step.
inline double trajectory_dynamics_log_prob(const TabularMDP& m, const Trajectory& tau) {
  check_trajectory_indices(m, tau);
  double lp = std::log(m.initial_dist[tau.states[0]]);
  for (std::size_t t = 0; t + 1 < m.horizon; ++t)
    lp += std::log(m.transition(tau.states[t], tau.actions[t], tau.states[t + 1]));
  return lp;
}

inline bool is_feasible(const TabularMDP& m, const Trajectory& tau) {
  return trajectory_dynamics_log_prob(m, tau) != kNegInf;
}

inline double trajectory_return(const TabularMDP& m, const Trajectory& tau) {
  check_trajectory_indices(m, tau);
  double total = 0.0;
  for (std::size_t t = 0; t < m.horizon; ++t) total += m.reward(tau.states[t], tau.actions[t]);
  return total;
}

/// Throws std::invalid_argument unless pi is T x S x A with rows on the simplex.
inline void validate_policy(const TabularMDP& m, const Policy& pi, double tol = 1e-9) {
  if (pi.dim0() != m.horizon || pi.dim1() != m.num_states || pi.dim2() != m.num_actions)
    throw std::invalid_argument("policy shape does not match MDP");
  for (std::size_t t = 0; t < m.horizon; ++t) {
    for (std::size_t s = 0; s < m.num_states; ++s) {
      double sum = 0.0;
      for (double p : pi.row(t, s)) {
        if (!(p >= 0.0 && p <= 1.0 + tol))
          throw std::invalid_argument("policy entry outside [0,1] at t=" + std::to_string(t) + " s=" + std::to_string(s));
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("policy row t=" + std::to_string(t) + " s=" + std::to_string(s) + " sums to " +
                                    detail::fmt_num(sum));
    }
  }
}

/// mu(t, s): state marginals under pi and the true dynamics, started from `start`.
inline Table2<double> state_marginals(const TabularMDP& m, const Policy& pi, std::span<const double> start) {
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  Table2<double> mu(T, S, 0.0);
  for (std::size_t s = 0; s < S; ++s) mu(0, s) = start[s];
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double ms = mu(t, s);
      if (ms == 0.0) continue;
      for (std::size_t a = 0; a < A; ++a) {
        const double w = ms * pi(t, s, a);
        if (w == 0.0) continue;
        for (std::size_t s2 = 0; s2 < S; ++s2) mu(t + 1, s2) += w * m.transition(s, a, s2);
      }
    }
  }
  return mu;
}

inline Table2<double> state_marginals(const TabularMDP& m, const Policy& pi) {
  return state_marginals(m, pi, m.initial_dist);
}

/// Uniform policy rows, the action prior of the generative model.
inline Policy uniform_policy(const TabularMDP& m) {
  return Policy(m.horizon, m.num_states, m.num_actions, 1.0 / static_cast<double>(m.num_actions));
}

}  // namespace softctl
