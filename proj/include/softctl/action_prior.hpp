#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace softctl {

/// How the soft value marginalizes actions.
///
///  - counting: V(s) = log sum_a exp Q(s, a). This is the library default.
///  - uniform:  V(s) = log (1/|A|) sum_a exp Q(s, a), i.e. beta_t(s) with the
///    uniform action prior kept in. Values shift by -log|A| per remaining
///    step relative to counting; policies are identical.
enum class ActionPrior { counting, uniform };

/// Additive constant applied to log-sum-exp over actions.
inline double action_prior_offset(ActionPrior prior, std::size_t num_actions) {
  return prior == ActionPrior::uniform ? -std::log(static_cast<double>(num_actions)) : 0.0;
}

inline std::string_view to_string(ActionPrior p) { return p == ActionPrior::uniform ? "uniform" : "counting"; }

inline ActionPrior parse_action_prior(std::string_view name) {
  if (name == "counting") return ActionPrior::counting;
  if (name == "uniform") return ActionPrior::uniform;
  throw std::invalid_argument("unknown action prior '" + std::string(name) + "' (expected counting|uniform)");
}

}  // namespace softctl
