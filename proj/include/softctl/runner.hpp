#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "softctl/exact_inference.hpp"
#include "softctl/io.hpp"
#include "softctl/irl.hpp"
#include "softctl/learners.hpp"
#include "softctl/oracle.hpp"
#include "softctl/soft_solver.hpp"

namespace softctl {

inline constexpr const char* kVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int invalid_mdp = 3;
inline constexpr int capacity = 4;
inline constexpr int divergence = 5;
inline constexpr int io = 6;
}  // namespace exit_code

/// Bad config: unknown keys, wrong types, out-of-range parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ParamKind { positive_number, discount, nonneg_number, positive_int, nonneg_int, boolean, path, action_prior };

struct ParamSpec {
  const char* name;
  ParamKind kind;
  json default_value;  // null means required
  const char* help;
};

struct TaskSpec {
  const char* name;
  const char* help;
  std::vector<ParamSpec> params;
};

/// Every task and its parameter block. Defaults are filled in before hashing,
/// so the flag form and the config-file form of one experiment hash alike.
inline const std::vector<TaskSpec>& task_specs() {
  static const std::vector<TaskSpec> specs = {
      {"solve-exact",
       "exact backward messages and message-ratio policy",
       {{"action_prior", ParamKind::action_prior, "counting", "counting|uniform action marginalization"}}},
      {"solve-soft",
       "soft value iteration and max-ent policy",
       {{"temperature", ParamKind::positive_number, 1.0, "temperature alpha"},
        {"discount", ParamKind::discount, 1.0, "discount gamma in (0,1]"},
        {"stationary", ParamKind::boolean, false, "solve the stationary (infinite-horizon) problem"},
        {"convergence_tol", ParamKind::positive_number, 1e-10, "sup-norm tolerance for --stationary"},
        {"max_iters", ParamKind::positive_int, 100000, "sweep cap for --stationary"},
        {"action_prior", ParamKind::action_prior, "counting", "counting|uniform action marginalization"}}},
      {"compare-risk",
       "CSV contrasting exact and variational Q rows and policies",
       {{"action_prior", ParamKind::action_prior, "counting", "counting|uniform action marginalization"}}},
      {"pg",
       "max-ent policy gradient ascent",
       {{"rate", ParamKind::positive_number, 0.5, "step size"},
        {"iters", ParamKind::positive_int, 200, "gradient steps"},
        {"samples", ParamKind::nonneg_int, 0, "trajectories per estimate (0 = exact expectation)"},
        {"curve", ParamKind::path, "", "curve CSV path (default <out>.curve.csv)"}}},
      {"actor-critic",
       "max-ent actor-critic with tabular critic",
       {{"actor_rate", ParamKind::positive_number, 0.1, "actor step size"},
        {"critic_rate", ParamKind::positive_number, 0.1, "critic step size"},
        {"iters", ParamKind::positive_int, 5000, "update steps"},
        {"curve", ParamKind::path, "", "curve CSV path (default <out>.curve.csv)"}}},
      {"soft-q",
       "synchronous soft Q-learning sweeps",
       {{"rate", ParamKind::positive_number, 1.0, "step size in (0,1]"},
        {"sweeps", ParamKind::positive_int, 1, "number of sweeps"},
        {"curve", ParamKind::path, "", "curve CSV path (default <out>.curve.csv)"}}},
      {"irl",
       "max-ent inverse RL with linear features",
       {{"features", ParamKind::path, nullptr, "feature file [S][A][d]"},
        {"demos", ParamKind::path, nullptr, "demo file [{states, actions}]"},
        {"rate", ParamKind::positive_number, 1.0, "initial step size"},
        {"iters", ParamKind::positive_int, 200, "ascent iterations"},
        {"l2", ParamKind::nonneg_number, 0.0, "L2 penalty coefficient"},
        {"curve", ParamKind::path, "", "curve CSV path (default <out>.curve.csv)"}}},
      {"oracle-dump", "CSV of every feasible trajectory with its posterior log-probability", {}},
  };
  return specs;
}

inline const TaskSpec& find_task(std::string_view name) {
  for (const auto& t : task_specs())
    if (name == t.name) return t;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

struct ExperimentConfig {
  std::string task;
  std::string mdp_path;
  std::string output_path;
  std::uint64_t seed = 0;
  json params = json::object();
};

namespace detail {

inline json check_param(const ParamSpec& spec, const json& v) {
  const std::string where = std::string("parameter '") + spec.name + "'";
  switch (spec.kind) {
    case ParamKind::positive_number:
    case ParamKind::discount:
    case ParamKind::nonneg_number: {
      if (!v.is_number()) throw ConfigError(where + " must be a number");
      const double x = v.get<double>();
      const bool good = spec.kind == ParamKind::positive_number ? (x > 0.0 && std::isfinite(x))
                        : spec.kind == ParamKind::discount      ? (x > 0.0 && x <= 1.0)
                                                                : (x >= 0.0 && std::isfinite(x));
      if (!good) throw ConfigError(where + " is out of range");
      return x;
    }
    case ParamKind::positive_int:
    case ParamKind::nonneg_int: {
      if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
      const long long x = v.get<long long>();
      if (x < 0 || (spec.kind == ParamKind::positive_int && x == 0)) throw ConfigError(where + " is out of range");
      return static_cast<std::uint64_t>(x);
    }
    case ParamKind::boolean:
      if (!v.is_boolean()) throw ConfigError(where + " must be a boolean");
      return v;
    case ParamKind::path:
      if (!v.is_string()) throw ConfigError(where + " must be a string");
      return v;
    case ParamKind::action_prior:
      if (!v.is_string()) throw ConfigError(where + " must be a string");
      try {
        parse_action_prior(v.get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      return v;
  }
  return v;
}

}  // namespace detail

/// Parses {"task", "mdp", "out", "seed", "params"}; rejects unknown keys and
/// fills parameter defaults. `task_hint` (from the command line) must agree
/// with "task" when both are present.
inline ExperimentConfig parse_config(const json& doc, std::string_view task_hint = {}) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const auto& k = it.key();
    if (k != "task" && k != "mdp" && k != "out" && k != "seed" && k != "params")
      throw ConfigError("unknown config key '" + k + "'");
  }
  ExperimentConfig cfg;
  if (doc.contains("task")) {
    if (!doc["task"].is_string()) throw ConfigError("'task' must be a string");
    cfg.task = doc["task"].get<std::string>();
  }
  if (!task_hint.empty()) {
    if (!cfg.task.empty() && cfg.task != task_hint)
      throw ConfigError("config task '" + cfg.task + "' does not match command '" + std::string(task_hint) + "'");
    cfg.task = task_hint;
  }
  if (cfg.task.empty()) throw ConfigError("no task given");
  const TaskSpec& spec = find_task(cfg.task);

  if (!doc.contains("mdp") || !doc["mdp"].is_string()) throw ConfigError("'mdp' path is required");
  if (!doc.contains("out") || !doc["out"].is_string()) throw ConfigError("'out' path is required");
  cfg.mdp_path = doc["mdp"].get<std::string>();
  cfg.output_path = doc["out"].get<std::string>();
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))
      throw ConfigError("'seed' must be a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }

  const json given = doc.contains("params") ? doc["params"] : json::object();
  if (!given.is_object()) throw ConfigError("'params' must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    bool known = false;
    for (const auto& p : spec.params) known = known || it.key() == p.name;
    if (!known) throw ConfigError("unknown parameter '" + it.key() + "' for task " + cfg.task);
  }
  for (const auto& p : spec.params) {
    if (given.contains(p.name)) {
      cfg.params[p.name] = detail::check_param(p, given[p.name]);
    } else if (p.default_value.is_null()) {
      throw ConfigError(std::string("parameter '") + p.name + "' is required for task " + cfg.task);
    } else {
      cfg.params[p.name] = p.default_value;
    }
  }
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  return json{{"task", cfg.task}, {"mdp", cfg.mdp_path}, {"out", cfg.output_path}, {"seed", cfg.seed},
              {"params", cfg.params}};
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(to_canonical_string(config_to_json(cfg))));
}

/// SOFTCTL_THREADS caps internal parallelism; unset or invalid means all cores.
inline std::size_t threads_from_env() {
  const char* v = std::getenv("SOFTCTL_THREADS");
  if (!v) return 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v, &end, 10);
  return (end && *end == '\0' && n > 0) ? static_cast<std::size_t>(n) : 0;
}

namespace detail {

/// Per-iteration seed for sampled gradient estimates.
inline std::uint64_t splitmix64_seed(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(seed ^ splitmix64(counter + 0x5EED));
}

struct Artifact {
  std::filesystem::path path;
  std::string content;
};

class CsvBuilder {
 public:
  CsvBuilder(const ExperimentConfig& cfg, std::string header) {
    out_ << "# softctl " << kVersion << " config_hash=" << config_hash(cfg) << "\n" << header << "\n";
  }
  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << "\n";
  }
  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(std::size_t x) { return std::to_string(x); }
  static std::string cell(const std::string& x) { return x; }
  static std::string cell(const char* x) { return x; }
  std::ostringstream out_;
};

inline std::string stamped_json(const ExperimentConfig& cfg, json result) {
  json doc{{"softctl_version", kVersion},
           {"config_hash", config_hash(cfg)},
           {"config", config_to_json(cfg)},
           {"result", std::move(result)}};
  return to_canonical_string(doc) + "\n";
}

inline std::filesystem::path curve_path(const ExperimentConfig& cfg) {
  const std::string given = cfg.params.value("curve", std::string());
  return given.empty() ? std::filesystem::path(cfg.output_path + ".curve.csv") : std::filesystem::path(given);
}

inline ActionPrior prior_param(const ExperimentConfig& cfg) {
  return parse_action_prior(cfg.params.value("action_prior", std::string("counting")));
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DivergenceError(std::string(what) + " became non-finite");
}

inline std::vector<Artifact> run_solve_exact(const ExperimentConfig& cfg, const TabularMDP& m) {
  const ActionPrior prior = prior_param(cfg);
  const auto msg = backward_messages(m, prior);
  const double offset_total =
      prior == ActionPrior::counting ? static_cast<double>(m.horizon) * std::log(static_cast<double>(m.num_actions)) : 0.0;
  json result{{"action_prior", std::string(to_string(prior))},
              {"log_q", to_json(msg.log_q)},
              {"log_v", to_json(msg.log_v)},
              {"policy", to_json(message_ratio_policy(msg))},
              {"log_evidence", log_evidence(m, msg) - offset_total}};
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}};
}

inline std::vector<Artifact> run_solve_soft(const ExperimentConfig& cfg, const TabularMDP& m) {
  const ActionPrior prior = prior_param(cfg);
  SolverConfig sc;
  sc.temperature = cfg.params["temperature"].get<double>();
  sc.discount = cfg.params["discount"].get<double>();
  sc.convergence_tol = cfg.params["convergence_tol"].get<double>();
  sc.max_iters = cfg.params["max_iters"].get<std::size_t>();
  sc.rng_seed = cfg.seed;
  sc.validate();
  json result{{"action_prior", std::string(to_string(prior))}, {"temperature", sc.temperature}, {"discount", sc.discount}};
  if (cfg.params["stationary"].get<bool>()) {
    const auto sol = soft_value_iteration_stationary(m, sc, prior);
    if (!sol.converged)
      throw DivergenceError("stationary soft value iteration did not converge within " + std::to_string(sc.max_iters) +
                            " sweeps (last change " + format_double(sol.final_change) + ")");
    result["q"] = to_json(sol.q);
    result["v"] = to_json(std::span<const double>(sol.v));
    result["policy"] = to_json(sol.policy);
    result["iterations"] = sol.iterations;
    result["has_absorbing_state"] = sol.has_absorbing_state;
  } else {
    const TabularMDP base = sc.discount < 1.0 ? apply_discount_transform(m, sc.discount) : m;
    const TabularMDP scaled = apply_temperature(base, sc.temperature);
    auto tab = soft_value_iteration(scaled, prior);
    const auto pi = extract_policy(tab);
    for (auto& x : tab.q.data()) x *= sc.temperature;
    for (auto& x : tab.v.data()) x *= sc.temperature;
    result["q"] = to_json(tab.q);
    result["v"] = to_json(tab.v);
    result["policy"] = to_json(pi);
    result["objective"] = sc.temperature * elbo(scaled, pi);
    result["has_absorbing_state"] = sc.discount < 1.0;
  }
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}};
}

inline std::vector<Artifact> run_compare_risk(const ExperimentConfig& cfg, const TabularMDP& m) {
  const ActionPrior prior = prior_param(cfg);
  const auto msg = backward_messages(m, prior);
  const auto exact_pi = message_ratio_policy(msg);
  const auto tab = soft_value_iteration(m, prior);
  const auto soft_pi = extract_policy(tab);
  CsvBuilder csv(cfg, "method,t,state,action,q,pi");
  auto emit = [&](const char* method, const Table3<double>& q, const Policy& pi) {
    for (std::size_t t = 0; t < m.horizon; ++t)
      for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a) csv.row(method, t, s, a, q(t, s, a), pi(t, s, a));
  };
  emit("exact", msg.log_q, exact_pi);
  emit("variational", tab.q, soft_pi);
  return {{cfg.output_path, csv.str()}};
}

inline std::vector<Artifact> run_pg(const ExperimentConfig& cfg, const TabularMDP& m) {
  const double rate = cfg.params["rate"].get<double>();
  const std::size_t iters = cfg.params["iters"].get<std::size_t>();
  const std::size_t samples = cfg.params["samples"].get<std::size_t>();
  PolicyParams theta = PolicyParams::uniform(m);
  CsvBuilder csv(cfg, "iteration,objective,grad_norm");
  for (std::size_t it = 0; it < iters; ++it) {
    GradientOptions opts;
    opts.kind = samples == 0 ? EstimatorKind::exact_expectation : EstimatorKind::monte_carlo;
    opts.samples = samples;
    opts.seed = splitmix64_seed(cfg.seed, it);
    opts.threads = threads_from_env();
    const auto g = maxent_policy_gradient(m, theta, opts);
    require_finite(g.wrt_logits.data(), "policy gradient");
    csv.row(it, maxent_objective_by_decomposition(m, theta.policy()), max_abs(g.wrt_logits.data()));
    for (std::size_t i = 0; i < g.wrt_logits.size(); ++i) theta.logits.data()[i] += rate * g.wrt_logits.data()[i];
  }
  const auto pi = theta.policy();
  json result{{"logits", to_json(theta.logits)},
              {"policy", to_json(pi)},
              {"objective", maxent_objective_by_decomposition(m, pi)},
              {"estimator", samples == 0 ? "exact-expectation" : "monte-carlo"}};
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}, {curve_path(cfg), csv.str()}};
}

inline std::vector<Artifact> run_actor_critic(const ExperimentConfig& cfg, const TabularMDP& m) {
  const double actor_rate = cfg.params["actor_rate"].get<double>();
  const double critic_rate = cfg.params["critic_rate"].get<double>();
  const std::size_t iters = cfg.params["iters"].get<std::size_t>();
  ActorCriticState st{PolicyParams::uniform(m), CriticParams::zeros(m)};
  CsvBuilder csv(cfg, "iteration,objective,q_loss,v_loss");
  for (std::size_t it = 0; it < iters; ++it) {
    const auto losses = critic_losses(m, st.theta, st.critic);
    csv.row(it, maxent_objective_by_decomposition(m, st.theta.policy()), losses.q_loss, losses.v_loss);
    st = actor_critic_step(m, st.theta, st.critic, actor_rate, critic_rate);
    require_finite(st.theta.logits.data(), "actor logits");
    require_finite(st.critic.q_table.data(), "critic");
  }
  const auto losses = critic_losses(m, st.theta, st.critic);
  json result{{"logits", to_json(st.theta.logits)},
              {"policy", to_json(st.theta.policy())},
              {"q_table", to_json(st.critic.q_table)},
              {"v_table", to_json(st.critic.v_table)},
              {"q_loss", losses.q_loss},
              {"v_loss", losses.v_loss}};
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}, {curve_path(cfg), csv.str()}};
}

inline std::vector<Artifact> run_soft_q(const ExperimentConfig& cfg, const TabularMDP& m) {
  const double rate = cfg.params["rate"].get<double>();
  if (rate > 1.0) throw ConfigError("soft-q rate must lie in (0, 1]");
  const std::size_t sweeps = cfg.params["sweeps"].get<std::size_t>();
  CsvBuilder csv(cfg, "sweep,max_residual");
  const auto phi = soft_q_learning(m, CriticParams::zeros(m), rate, sweeps,
                                   [&](std::size_t sweep, double residual) { csv.row(sweep, residual); });
  require_finite(phi.q_table.data(), "soft Q table");
  Policy pi(m.horizon, m.num_states, m.num_actions);
  for (std::size_t t = 0; t < m.horizon; ++t)
    for (std::size_t s = 0; s < m.num_states; ++s) softmax(phi.q_table.row(t, s), pi.row(t, s));
  json result{{"q_table", to_json(phi.q_table)}, {"v_table", to_json(phi.v_table)}, {"policy", to_json(pi)}};
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}, {curve_path(cfg), csv.str()}};
}

inline std::vector<Artifact> run_irl(const ExperimentConfig& cfg, const TabularMDP& m) {
  FeatureMap f;
  DemoSet demos;
  try {
    f = features_from_json(read_json_file(cfg.params["features"].get<std::string>()), m);
    demos = demos_from_json(read_json_file(cfg.params["demos"].get<std::string>()));
    demo_weights(m, demos);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("IRL inputs rejected: ") + e.what());
  }
  const auto rep = irl_fit(m, f, demos, cfg.params["rate"].get<double>(), cfg.params["iters"].get<std::size_t>(),
                           cfg.params["l2"].get<double>());
  CsvBuilder csv(cfg, "iteration,objective,gradient_norm,step");
  for (std::size_t it = 0; it < rep.step_sizes.size(); ++it)
    csv.row(it, rep.objective_curve[it + 1], rep.gradient_norms[it], rep.step_sizes[it]);
  json result{{"weights", rep.params.weights},
              {"policy", to_json(irl_policy(m, f, rep.params))},
              {"objective", rep.objective_curve.back()},
              {"final_gradient_norm", rep.final_gradient_norm},
              {"backtracks", rep.backtracks}};
  return {{cfg.output_path, stamped_json(cfg, std::move(result))}, {curve_path(cfg), csv.str()}};
}

inline std::vector<Artifact> run_oracle_dump(const ExperimentConfig& cfg, const TabularMDP& m) {
  const auto post = posterior_trajectory_distribution(m);
  const auto& d = post.distribution;
  CsvBuilder csv(cfg, "id,states,actions,log_prob");
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::string states, actions;
    for (std::size_t t = 0; t < d.horizon(); ++t) {
      if (t) {
        states += ' ';
        actions += ' ';
      }
      states += std::to_string(d.state_at(i, t));
      actions += std::to_string(d.action_at(i, t));
    }
    csv.row(i, states, actions, d.log_probability(i));
  }
  return {{cfg.output_path, csv.str()}};
}

}  // namespace detail

/// Runs one experiment and writes its artifacts. Returns an exit code from
/// softctl::exit_code; diagnostics go to `err`.
inline int run(const ExperimentConfig& cfg, std::ostream& err = std::cerr) {
  try {
    find_task(cfg.task);
    const TabularMDP m = load_mdp(cfg.mdp_path);
    std::vector<detail::Artifact> artifacts;
    if (cfg.task == "solve-exact") artifacts = detail::run_solve_exact(cfg, m);
    else if (cfg.task == "solve-soft") artifacts = detail::run_solve_soft(cfg, m);
    else if (cfg.task == "compare-risk") artifacts = detail::run_compare_risk(cfg, m);
    else if (cfg.task == "pg") artifacts = detail::run_pg(cfg, m);
    else if (cfg.task == "actor-critic") artifacts = detail::run_actor_critic(cfg, m);
    else if (cfg.task == "soft-q") artifacts = detail::run_soft_q(cfg, m);
    else if (cfg.task == "irl") artifacts = detail::run_irl(cfg, m);
    else if (cfg.task == "oracle-dump") artifacts = detail::run_oracle_dump(cfg, m);
    for (const auto& a : artifacts) write_file_atomic(a.path, a.content);
    return exit_code::ok;
  } catch (const InvalidMdpError& e) {
    err << "softctl: invalid MDP: " << e.what() << "\n";
    return exit_code::invalid_mdp;
  } catch (const CapacityError& e) {
    err << "softctl: capacity exceeded: " << e.what() << "\n";
    return exit_code::capacity;
  } catch (const DivergenceError& e) {
    err << "softctl: divergence: " << e.what() << "\n";
    return exit_code::divergence;
  } catch (const IoError& e) {
    err << "softctl: I/O error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "softctl: " << e.what() << "\n";
    return exit_code::usage;
  }
}

}  // namespace softctl
