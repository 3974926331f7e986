#pragma once

#include <memory>
#include <vector>

#include "optterm/core_mdp.hpp"

namespace optterm {

/// Which per-state termination vector an operator should read.
enum class Termination { zeta, beta };

/// One option: initiation mask, internal policy, and the two termination
/// conditions. `zeta` drives execution, `beta` defines the learning target.
struct OptionDef {
  int id = 0;
  std::vector<bool> initiation;
  PrimitivePolicy policy;
  Vector zeta;
  Vector beta;
  std::vector<int> goal_states;

  const Vector& termination(Termination which) const { return which == Termination::zeta ? zeta : beta; }
  bool is_goal(int s) const;
};

/// Builds an option from scalar terminations. The scalars are expanded per
/// state, then forced to 1 on goal states and on terminal MDP states.
OptionDef make_option(const TabularMDP& mdp, int id, PrimitivePolicy policy, double zeta, double beta,
                      std::vector<int> goal_states);

/// Same, with full per-state vectors.
OptionDef make_option(const TabularMDP& mdp, int id, PrimitivePolicy policy, Vector zeta, Vector beta,
                      std::vector<int> goal_states);

/// Immutable option set over a shared MDP. Per-option induced chains p^{pi^o}
/// and rewards r^{pi^o} are computed once and shared between copies that
/// differ only in their terminations.
class OptionSet {
 public:
  OptionSet(std::shared_ptr<const TabularMDP> mdp, std::vector<OptionDef> options);

  const TabularMDP& mdp() const { return *mdp_; }
  const std::shared_ptr<const TabularMDP>& mdp_ptr() const { return mdp_; }
  int size() const { return static_cast<int>(options_.size()); }
  int n_states() const { return mdp_->n_states; }
  double gamma() const { return mdp_->gamma; }

  const OptionDef& operator[](int o) const { return options_[static_cast<std::size_t>(o)]; }
  auto begin() const { return options_.begin(); }
  auto end() const { return options_.end(); }

  /// p^{pi^o} as an S x S matrix.
  const Matrix& option_transition(int o) const { return (*induced_)[static_cast<std::size_t>(o)].transition; }
  /// r^{pi^o} as an S-vector.
  const Vector& option_reward(int o) const { return (*induced_)[static_cast<std::size_t>(o)].reward; }
  /// r^pi laid out S x O.
  Matrix reward_table() const;
  /// zeta or beta laid out S x O.
  Matrix termination_table(Termination which) const;

  /// Copy with both terminations re-expanded from scalars (goal overrides reapplied).
  OptionSet with_terminations(double zeta, double beta) const;
  /// Copy with only the target termination replaced.
  OptionSet with_beta(double beta) const;
  /// Copy with only the behavior termination replaced.
  OptionSet with_zeta(double zeta) const;
  /// Copy with S x O termination tables (goal overrides reapplied).
  OptionSet with_termination_tables(const Matrix& zeta, const Matrix& beta) const;

 private:
  struct Induced {
    Matrix transition;
    Vector reward;
  };

  OptionSet(std::shared_ptr<const TabularMDP> mdp, std::vector<OptionDef> options,
            std::shared_ptr<const std::vector<Induced>> induced);

  std::shared_ptr<const TabularMDP> mdp_;
  std::vector<OptionDef> options_;
  std::shared_ptr<const std::vector<Induced>> induced_;
};

/// Per-state distribution over option ids, stored S x O.
struct PolicyOverOptions {
  Matrix probs;

  void validate(const OptionSet& opts) const;

  /// Uniform over the options initiable in each state.
  static PolicyOverOptions uniform(const OptionSet& opts);
  /// Point mass on `choice[s]`.
  static PolicyOverOptions deterministic(const std::vector<int>& choice, int n_options);
};

/// Value table over (state, option) pairs, stored S x O.
struct StateOptionQ {
  Matrix values;

  int n_states() const { return static_cast<int>(values.rows()); }
  int n_options() const { return static_cast<int>(values.cols()); }

  static StateOptionQ zeros(const OptionSet& opts) { return {Matrix::Zero(opts.n_states(), opts.size())}; }

  /// Column-major flattening: pair (s, o) sits at o * S + s, so operators that
  /// keep the current option are block diagonal.
  Vector flat() const { return Eigen::Map<const Vector>(values.data(), values.size()); }
  static StateOptionQ from_flat(const Vector& v, int n_states, int n_options) {
    return {Eigen::Map<const Matrix>(v.data(), n_states, n_options)};
  }
};

/// kappa(a|s) = sum_o mu(o|s) pi^o(a|s).
PrimitivePolicy marginal_policy(const OptionSet& opts, const PolicyOverOptions& mu);

/// E_mu q(s, .) = sum_o mu(o|s) q(s,o).
double expected_q_under_mu(const StateOptionQ& q, const PolicyOverOptions& mu, int s);
/// The same for every state at once.
Vector expected_q_under_mu(const StateOptionQ& q, const PolicyOverOptions& mu);

/// Greedy policy over options, restricted to initiable options, lowest id on ties.
PolicyOverOptions greedy_mu(const OptionSet& opts, const StateOptionQ& q, double tie_tolerance = kExactTieTolerance);

/// Semi-MDP models of running each option to termination.
struct SmdpModel {
  /// reward[o](s): expected discounted reward accumulated until termination.
  std::vector<Vector> reward;
  /// transition[o](s, s'): E[gamma^D ; end in s'].
  std::vector<Matrix> transition;
};

/// Solves R^o = r^{pi^o} + gamma p^{pi^o} diag(1 - tau) R^o and the matching
/// recursion for P^o, one factorization per option, with tau = zeta or beta.
SmdpModel smdp_models(const OptionSet& opts, Termination termination);

nlohmann::json option_set_to_json(const OptionSet& opts);
OptionSet option_set_from_json(const nlohmann::json& j);

}  // namespace optterm
