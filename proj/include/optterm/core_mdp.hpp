#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "optterm/errors.hpp"

namespace optterm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Probability mass tolerance used by every distribution check.
inline constexpr double kMassTolerance = 1e-12;

/// Index of the largest entry; an entry must beat the incumbent by more than
/// `tie_tolerance` to replace it, so ties go to the lowest index.
int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row, double tie_tolerance = 0.0);

/// Per-state distribution over primitive actions, stored n_states x n_actions.
struct PrimitivePolicy {
  Matrix probs;

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }
  void validate() const;

  static PrimitivePolicy uniform(int n_states, int n_actions);
  /// Point mass on `actions[s]` in every state.
  static PrimitivePolicy deterministic(const std::vector<int>& actions, int n_actions);
};

/// Q-function over (state, action) pairs.
struct ActionQ {
  Matrix values;

  int n_states() const { return static_cast<int>(values.rows()); }
  int n_actions() const { return static_cast<int>(values.cols()); }
};

/// Finite MDP. Terminal states are absorbing self-loops with zero reward, so
/// every operator below is total; episode ends only exist in the samplers.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  /// Row `s * n_actions + a` holds p(. | s, a).
  Matrix p;
  /// n_states x n_actions expected immediate reward.
  Matrix r;
  double gamma = 0.0;
  double r_max = 0.0;
  std::vector<bool> terminal;

  TabularMDP() = default;
  TabularMDP(int n_states, int n_actions, double gamma);

  double prob(int s, int a, int next) const { return p(row(s, a), next); }
  double& prob(int s, int a, int next) { return p(row(s, a), next); }
  int row(int s, int a) const { return s * n_actions + a; }

  /// Turns `s` into an absorbing zero-reward state.
  void make_terminal(int s);
  /// Sets r_max to the largest |r| entry.
  void refresh_r_max();

  /// Throws ConfigError if any documented invariant fails.
  void validate() const;

  /// p^pi(s, s') = sum_a pi(a|s) p(s'|s,a).
  Matrix policy_transition(const PrimitivePolicy& pi) const;
  /// r^pi(s) = sum_a pi(a|s) r(s,a).
  Vector policy_reward(const PrimitivePolicy& pi) const;
};

/// (P^pi q)(s,a) = sum_{s',a'} p(s'|s,a) pi(a'|s') q(s',a').
ActionQ transition_op(const TabularMDP& mdp, const PrimitivePolicy& pi, const ActionQ& q);

/// T^pi q = r + gamma P^pi q.
ActionQ bellman_op(const TabularMDP& mdp, const PrimitivePolicy& pi, const ActionQ& q);

/// T q = r + gamma P max_a' q(s', a').
ActionQ optimality_op(const TabularMDP& mdp, const ActionQ& q);

/// q^pi by a direct solve of (I - gamma p^pi) v = r^pi, lifted to actions.
ActionQ policy_eval_solve(const TabularMDP& mdp, const PrimitivePolicy& pi);

struct ValueIterationResult {
  ActionQ q;
  PrimitivePolicy greedy;
  int iterations = 0;
  double residual = 0.0;
};

/// Tie tolerance used when reading greedy choices off exactly solved values.
inline constexpr double kExactTieTolerance = 1e-10;

/// Optimal action values and the greedy policy (lowest index on ties).
/// Throws ConvergenceError if the residual does not reach `tol` in `max_iterations`.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol = 1e-10,
                                     int max_iterations = 1'000'000);

/// Greedy deterministic policy read off `q`.
PrimitivePolicy greedy_policy(const ActionQ& q, double tie_tolerance = kExactTieTolerance);

double sup_norm(const Matrix& m);

void to_json(nlohmann::json& j, const TabularMDP& mdp);
void from_json(const nlohmann::json& j, TabularMDP& mdp);

}  // namespace optterm
