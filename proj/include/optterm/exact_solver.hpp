#pragma once

#include <vector>

#include "optterm/options_model.hpp"

namespace optterm {

/// Coefficient function c(s, o) in [0,1], stored S x O.
struct CoeffFn {
  Matrix c;

  void validate(const OptionSet& opts) const;
  static CoeffFn constant(const OptionSet& opts, double value) { return {Matrix::Constant(opts.n_states(), opts.size(), value)}; }
};

/// Tag for the policy over options that keeps running the current option.
/// It is never a PolicyOverOptions; operators built with it are block diagonal.
struct KeepCurrent {};
inline constexpr KeepCurrent keep_current{};

/// Dense linear map on StateOptionQ, acting on the column-major flattening
/// (pair (s, o) at index o * S + s).
struct StateOptionOperator {
  Matrix m;
  int n_states = 0;
  int n_options = 0;

  StateOptionQ apply(const StateOptionQ& q) const {
    return StateOptionQ::from_flat(m * q.flat(), n_states, n_options);
  }
};

/// (P^{c nu} q)(s,o) = sum_s' p^{pi^o}(s'|s) c(s',o) sum_o' nu(o'|s') q(s',o').
StateOptionOperator coeff_transition_op(const OptionSet& opts, const CoeffFn& c, const PolicyOverOptions& nu);
/// P^{c iota}: as above with nu a point mass on the current option.
StateOptionOperator coeff_transition_op(const OptionSet& opts, const CoeffFn& c, KeepCurrent);

/// P^{(1-beta) iota}: option continuation.
StateOptionOperator continuation_op(const OptionSet& opts);
/// P^{beta mu}: option termination followed by a fresh choice from mu.
StateOptionOperator termination_op(const OptionSet& opts, const PolicyOverOptions& mu);

/// One-step target operator T^{(1-beta) iota} q + T^{beta mu} q = r^pi + gamma (P^{(1-beta) iota} + P^{beta mu}) q.
StateOptionQ target_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q);

/// Call-and-return Bellman operator (I - gamma P^{(1-tau) iota})^{-1} (r^pi + gamma P^{tau mu} q),
/// with tau the target termination by default or the behavior termination on request.
StateOptionQ option_bellman_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q,
                               Termination termination = Termination::beta);

/// q^{mu,iota}_beta = (I - gamma (P^{beta mu} - P^{beta iota}) - gamma P^{1 iota})^{-1} r^pi.
/// Throws NumericalError if the residual of the one-step form exceeds 1e-9.
StateOptionQ fixed_point_beta(const OptionSet& opts, const PolicyOverOptions& mu);

/// sup-norm of target_op(q) - q.
double fixed_point_residual(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q);

/// Q(beta) trace c(s,o) = (1 - zeta^o(s)) (1 - beta^o(s) + beta^o(s) mu(o|s)).
CoeffFn qbeta_trace(const OptionSet& opts, const PolicyOverOptions& mu);
/// Trace of the on-policy multi-step update that runs with beta as behavior: c = 1 - beta.
CoeffFn onpolicy_trace(const OptionSet& opts);

/// q + (I - gamma P^{c iota})^{-1} (target_op(q) - q) for an arbitrary trace c.
StateOptionQ trace_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q, const CoeffFn& c);

/// Expected Q(beta) operator: trace_op with the Q(beta) trace.
StateOptionQ expected_qbeta_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q);

/// eta(s,o) = 1 - (1 - gamma) [(I - gamma P^{c iota})^{-1} 1](s,o) for the Q(beta) trace, S x O.
Matrix contraction_eta(const OptionSet& opts, const PolicyOverOptions& mu);
/// Same for an explicit trace.
Matrix contraction_eta(const OptionSet& opts, const CoeffFn& c);

struct CorollaryThreshold {
  double value = 0.0;
  /// Set when zeta = 0 and mu = 0, where the bound is undefined.
  bool degenerate = false;
};

/// Smallest target termination for which the Q(beta) trace dominates the
/// on-policy trace 1 - beta: zeta / (mu (1 - zeta) + zeta).
CorollaryThreshold corollary_threshold(double zeta, double mu_prob);

struct ControlResult {
  StateOptionQ q;
  PolicyOverOptions mu;
  int iterations = 0;
  double residual = 0.0;
  /// Every iterate q_0 .. q_k when requested.
  std::vector<StateOptionQ> iterates;
};

/// q_0 = 0 for nonnegative rewards, otherwise -r_max / (1 - gamma).
StateOptionQ pessimistic_init(const OptionSet& opts);

/// q_{k+1} = R^{mu_k}_beta q_k with mu_k greedy in q_k, until the step is at most
/// `tol`. Throws ConvergenceError after `k_max` iterations.
ControlResult control_iteration(const OptionSet& opts, const StateOptionQ& q0, int k_max = 100'000,
                                double tol = 1e-10, bool keep_iterates = false);

struct MonotonicityReport {
  bool holds = false;
  /// max over (s,o) of q_lo - q_hi, clipped below at 0.
  double max_violation = 0.0;
  StateOptionQ q_hi;
  StateOptionQ q_lo;
};

inline constexpr double kMonotonicityTolerance = 1e-8;

/// Compares fixed points under target terminations beta_hi >= zeta_lo (S x O each) for a fixed mu.
MonotonicityReport check_monotonicity(const OptionSet& opts, const PolicyOverOptions& mu, const Matrix& beta_hi,
                                      const Matrix& zeta_lo);
MonotonicityReport check_monotonicity(const OptionSet& opts, const PolicyOverOptions& mu, double beta_hi,
                                      double zeta_lo);

}  // namespace optterm
