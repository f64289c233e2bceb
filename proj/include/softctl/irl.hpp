#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "softctl/errors.hpp"
#include "softctl/mdp.hpp"
#include "softctl/soft_solver.hpp"

namespace softctl {

/// f(s, a) in R^d, stored S x A x d.
struct FeatureMap {
  Table3<double> features;

  std::size_t dim() const { return features.dim2(); }
  std::span<const double> at(std::size_t s, std::size_t a) const { return features.row(s, a); }

  /// d = S*A indicator features, one per state-action pair.
  static FeatureMap one_hot(std::size_t states, std::size_t actions) {
    FeatureMap f{Table3<double>(states, actions, states * actions, 0.0)};
    for (std::size_t s = 0; s < states; ++s)
      for (std::size_t a = 0; a < actions; ++a) f.features(s, a, s * actions + a) = 1.0;
    return f;
  }
};

struct RewardParams {
  std::vector<double> weights;
};

/// Demonstrations as explicit trajectories, or as an exact per-step
/// state-action occupancy (T x S x A, each time slice summing to 1).
struct DemoSet {
  std::variant<std::vector<Trajectory>, Table3<double>> data;

  static DemoSet from_trajectories(std::vector<Trajectory> trajs) { return {std::move(trajs)}; }
  static DemoSet from_visitation(Table3<double> occupancy) { return {std::move(occupancy)}; }
};

/// r(s, a) = weights . f(s, a) with the dynamics of `m`.
inline TabularMDP reward_from_features(const TabularMDP& m, const FeatureMap& f, const RewardParams& phi) {
  if (f.features.dim0() != m.num_states || f.features.dim1() != m.num_actions)
    throw std::invalid_argument("feature map shape does not match MDP");
  if (phi.weights.size() != f.dim()) throw std::invalid_argument("weight vector length does not match feature dimension");
  TabularMDP out = m;
  for (std::size_t s = 0; s < m.num_states; ++s)
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      double r = 0.0;
      const auto fs = f.at(s, a);
      for (std::size_t k = 0; k < fs.size(); ++k) r += phi.weights[k] * fs[k];
      out.reward(s, a) = r;
    }
  return out;
}

/// Demo weight w(t, s, a): occupancy counts summed over demonstrations.
/// Rejects empty demo sets, malformed occupancies and infeasible trajectories.
inline Table3<double> demo_weights(const TabularMDP& m, const DemoSet& demos) {
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon;
  if (const auto* trajs = std::get_if<std::vector<Trajectory>>(&demos.data)) {
    if (trajs->empty()) throw std::invalid_argument("demo set is empty");
    Table3<double> w(T, S, A, 0.0);
    for (std::size_t i = 0; i < trajs->size(); ++i) {
      const auto& tau = (*trajs)[i];
      if (!is_feasible(m, tau))
        throw std::invalid_argument("demo " + std::to_string(i) + " is infeasible under the MDP dynamics");
      for (std::size_t t = 0; t < T; ++t) w(t, tau.states[t], tau.actions[t]) += 1.0;
    }
    return w;
  }
  const auto& occ = std::get<Table3<double>>(demos.data);
  if (occ.dim0() != T || occ.dim1() != S || occ.dim2() != A) throw std::invalid_argument("visitation must be T x S x A");
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t s = 0; s < S; ++s)
      for (double x : occ.row(t, s)) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("visitation entries must be non-negative");
        sum += x;
      }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("visitation slice t=" + std::to_string(t) + " does not sum to 1");
  }
  return occ;
}

/// Exact per-step occupancy of pi started from m.initial_dist.
inline Table3<double> policy_visitation(const TabularMDP& m, const Policy& pi) {
  const auto mu = state_marginals(m, pi);
  Table3<double> occ(m.horizon, m.num_states, m.num_actions, 0.0);
  for (std::size_t t = 0; t < m.horizon; ++t)
    for (std::size_t s = 0; s < m.num_states; ++s)
      for (std::size_t a = 0; a < m.num_actions; ++a) occ(t, s, a) = mu(t, s) * pi(t, s, a);
  return occ;
}

/// Soft-optimal policy for reward weights phi.
inline Policy irl_policy(const TabularMDP& m, const FeatureMap& f, const RewardParams& phi) {
  return extract_policy(soft_value_iteration(reward_from_features(m, f, phi)));
}

/// sum_i sum_t log pi_phi(a_{t,i} | s_{t,i}), or the occupancy-weighted sum.
inline double irl_log_likelihood(const TabularMDP& m, const FeatureMap& f, const RewardParams& phi,
                                 const DemoSet& demos) {
  const auto w = demo_weights(m, demos);
  const auto tab = soft_value_iteration(reward_from_features(m, f, phi));
  double ll = 0.0;
  for (std::size_t t = 0; t < m.horizon; ++t)
    for (std::size_t s = 0; s < m.num_states; ++s)
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        const double wt = w(t, s, a);
        if (wt != 0.0) ll += wt * (tab.q(t, s, a) - tab.v(t, s));
      }
  return ll;
}

/// Exact gradient of irl_log_likelihood:
///   sum_{t,s,a} w(t,s,a) [F(t,s,a) - G(t,s)]
/// where F = dQ/dphi = f(s,a) + E_{s'} G(t+1,s') and G = dV/dphi = E_pi F are the
/// expected feature counts from (t,s,a) and (t,s) onward under pi_phi.
///
/// Whenever the demo state marginals at t+1 equal the demo state-action
/// marginals at t pushed through the dynamics (exact visitations, or
/// deterministic dynamics) this telescopes into demo feature expectations
/// minus model feature expectations from the demo initial-state marginal,
/// see feature_expectation_gap.
inline std::vector<double> irl_gradient(const TabularMDP& m, const FeatureMap& f, const RewardParams& phi,
                                        const DemoSet& demos) {
  const auto w = demo_weights(m, demos);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon, d = f.dim();
  const Policy pi = irl_policy(m, f, phi);
  Table2<double> g_next(S, d, 0.0), g_cur(S, d, 0.0);
  std::vector<double> grad(d, 0.0), fa(d);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t t = T - 1 - k;
    for (std::size_t s = 0; s < S; ++s) {
      auto gs = g_cur.row(s);
      std::fill(gs.begin(), gs.end(), 0.0);
      double demo_mass = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const auto fs = f.at(s, a);
        for (std::size_t j = 0; j < d; ++j) fa[j] = fs[j];
        if (t + 1 < T) {
          const auto row = m.next_dist(s, a);
          for (std::size_t s2 = 0; s2 < S; ++s2)
            if (row[s2] > 0.0)
              for (std::size_t j = 0; j < d; ++j) fa[j] += row[s2] * g_next(s2, j);
        }
        const double p = pi(t, s, a);
        for (std::size_t j = 0; j < d; ++j) gs[j] += p * fa[j];
        const double wt = w(t, s, a);
        if (wt != 0.0) {
          demo_mass += wt;
          for (std::size_t j = 0; j < d; ++j) grad[j] += wt * fa[j];
        }
      }
      if (demo_mass != 0.0)
        for (std::size_t j = 0; j < d; ++j) grad[j] -= demo_mass * gs[j];
    }
    std::swap(g_cur, g_next);
  }
  return grad;
}

/// Moment-matching form: sum_t E_demo[f] - sum_t E_model[f], where the model
/// marginals run pi_phi forward from the demo state marginal at t = 0.
inline std::vector<double> feature_expectation_gap(const TabularMDP& m, const FeatureMap& f, const RewardParams& phi,
                                                   const DemoSet& demos) {
  const auto w = demo_weights(m, demos);
  const std::size_t S = m.num_states, A = m.num_actions, T = m.horizon, d = f.dim();
  const Policy pi = irl_policy(m, f, phi);
  std::vector<double> start(S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) start[s] += w(0, s, a);
  const auto mu = state_marginals(m, pi, start);
  std::vector<double> gap(d, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) {
        const double coef = w(t, s, a) - mu(t, s) * pi(t, s, a);
        if (coef == 0.0) continue;
        const auto fs = f.at(s, a);
        for (std::size_t j = 0; j < d; ++j) gap[j] += coef * fs[j];
      }
  return gap;
}

struct IrlFitReport {
  RewardParams params;
  /// Objective (log-likelihood minus the L2 penalty) before the first step and after each iteration.
  std::vector<double> objective_curve;
  std::vector<double> step_sizes;
  std::vector<double> gradient_norms;
  double final_gradient_norm = 0.0;
  std::size_t backtracks = 0;
};

/// Gradient ascent from phi = 0 on log-likelihood - (l2 / 2) |phi|^2. Each
/// iteration starts at `rate` and halves the step until the objective does
/// not decrease, so the recorded curve is monotone nondecreasing.
inline IrlFitReport irl_fit(const TabularMDP& m, const FeatureMap& f, const DemoSet& demos, double rate,
                            std::size_t iters, double l2 = 0.0) {
  if (!(rate > 0.0)) throw std::invalid_argument("IRL rate must be positive");
  if (iters == 0) throw std::invalid_argument("IRL needs at least one iteration");
  if (!(l2 >= 0.0)) throw std::invalid_argument("L2 coefficient must be non-negative");
  demo_weights(m, demos);
  const std::size_t d = f.dim();

  auto objective = [&](const RewardParams& p) {
    double pen = 0.0;
    for (double x : p.weights) pen += x * x;
    const double val = irl_log_likelihood(m, f, p, demos) - 0.5 * l2 * pen;
    if (!std::isfinite(val)) throw DivergenceError("IRL objective became non-finite");
    return val;
  };
  auto gradient = [&](const RewardParams& p) {
    auto g = irl_gradient(m, f, p, demos);
    for (std::size_t j = 0; j < d; ++j) g[j] -= l2 * p.weights[j];
    return g;
  };
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  IrlFitReport rep;
  rep.params.weights.assign(d, 0.0);
  double current = objective(rep.params);
  rep.objective_curve.push_back(current);
  constexpr int kMaxHalvings = 60;
  for (std::size_t it = 0; it < iters; ++it) {
    const auto g = gradient(rep.params);
    const double gn = norm(g);
    rep.gradient_norms.push_back(gn);
    if (!std::isfinite(gn)) throw DivergenceError("IRL gradient became non-finite");
    double step = rate;
    double accepted = 0.0;
    for (int h = 0; h <= kMaxHalvings && gn > 0.0; ++h) {
      RewardParams cand = rep.params;
      for (std::size_t j = 0; j < d; ++j) cand.weights[j] += step * g[j];
      const double val = objective(cand);
      if (val >= current) {
        rep.params = std::move(cand);
        current = val;
        accepted = step;
        break;
      }
      step *= 0.5;
      ++rep.backtracks;
    }
    rep.step_sizes.push_back(accepted);
    rep.objective_curve.push_back(current);
  }
  rep.final_gradient_norm = norm(gradient(rep.params));
  return rep;
}

}  // namespace softctl
