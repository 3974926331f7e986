#pragma once

#include "optterm/learners.hpp"

namespace optterm {

/// Deterministic random-walk chain: interior states 1..n_interior between two
/// terminal states. Action 0 steps left, action 1 steps right.
struct ChainConfig {
  int n_interior = 19;
  double reward_right = 1.0;
  double reward_left = 0.0;
  double gamma = 0.99;
  /// Scalar terminations expanded over the interior.
  double zeta = 1.0;
  double beta = 1.0;
};

inline constexpr int kChainLeftOption = 0;
inline constexpr int kChainRightOption = 1;

/// Chain MDP with a "left" and a "right" option running to their terminal;
/// episodes start in the middle state.
TabularTask build_chain(const ChainConfig& cfg);

/// The 19-state benchmark with default rewards and discount.
inline TabularTask build_chain19(double zeta = 1.0, double beta = 1.0) {
  ChainConfig cfg;
  cfg.zeta = zeta;
  cfg.beta = beta;
  return build_chain(cfg);
}

}  // namespace optterm
