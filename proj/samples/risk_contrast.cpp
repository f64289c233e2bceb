// Prints the exact-inference and variational Q rows at s0 of the Risk MDP.
//
//   risk_contrast [path/to/risk_mdp.json]

#include <cstdio>

#include "softctl/softctl.hpp"

int main(int argc, char** argv) {
  const char* path = argc > 1 ? argv[1] : "samples/risk_mdp.json";
  try {
    const softctl::TabularMDP m = softctl::load_mdp(path);
    for (auto prior : {softctl::ActionPrior::uniform, softctl::ActionPrior::counting}) {
      const auto msg = softctl::backward_messages(m, prior);
      const auto exact_pi = softctl::message_ratio_policy(msg);
      const auto tab = softctl::soft_value_iteration(m, prior);
      const auto soft_pi = softctl::extract_policy(tab);
      std::printf("action prior: %s\n", softctl::to_string(prior).data());
      std::printf("  exact        Q(s0,safe)=%.6f Q(s0,risky)=%.6f pi(risky)=%.6f\n", msg.log_q(0, 0, 0),
                  msg.log_q(0, 0, 1), exact_pi(0, 0, 1));
      std::printf("  variational  Q(s0,safe)=%.6f Q(s0,risky)=%.6f pi(risky)=%.6f\n", tab.q(0, 0, 0), tab.q(0, 0, 1),
                  soft_pi(0, 0, 1));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "risk_contrast: %s\n", e.what());
    return 1;
  }
  return 0;
}
