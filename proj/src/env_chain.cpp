#include "optterm/env/chain.hpp"

namespace optterm {

TabularTask build_chain(const ChainConfig& cfg) {
  if (cfg.n_interior < 1) throw ConfigError("chain needs at least one interior state");
  const int n = cfg.n_interior + 2;
  const int left_end = 0;
  const int right_end = n - 1;
  auto mdp = std::make_shared<TabularMDP>(n, 2, cfg.gamma);
  for (int s = 1; s < right_end; ++s) {
    mdp->prob(s, 0, s - 1) = 1.0;
    mdp->prob(s, 1, s + 1) = 1.0;
    if (s - 1 == left_end) mdp->r(s, 0) = cfg.reward_left;
    if (s + 1 == right_end) mdp->r(s, 1) = cfg.reward_right;
  }
  mdp->make_terminal(left_end);
  mdp->make_terminal(right_end);
  mdp->refresh_r_max();
  mdp->validate();

  std::vector<OptionDef> options;
  options.push_back(make_option(*mdp, kChainLeftOption, PrimitivePolicy::deterministic(std::vector<int>(n, 0), 2),
                                cfg.zeta, cfg.beta, {left_end}));
  options.push_back(make_option(*mdp, kChainRightOption, PrimitivePolicy::deterministic(std::vector<int>(n, 1), 2),
                                cfg.zeta, cfg.beta, {right_end}));
  return {OptionSet(std::move(mdp), std::move(options)), n / 2};
}

}  // namespace optterm
