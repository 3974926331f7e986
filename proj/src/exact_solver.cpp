#include "optterm/exact_solver.hpp"

#include <cmath>

#include <fmt/format.h>

namespace optterm {

namespace {

void check_mu(const OptionSet& opts, const PolicyOverOptions& mu) {
  if (mu.probs.rows() != opts.n_states() || mu.probs.cols() != opts.size()) {
    throw ConfigError("policy over options must be S x O");
  }
}

void check_q(const OptionSet& opts, const StateOptionQ& q) {
  if (q.n_states() != opts.n_states() || q.n_options() != opts.size()) {
    throw ConfigError(fmt::format("Q table is {}x{}, option set needs {}x{}", q.n_states(), q.n_options(),
                                  opts.n_states(), opts.size()));
  }
}

// Solves (I - gamma P^{c iota}) x = rhs one option block at a time.
Vector solve_keep_current(const OptionSet& opts, const CoeffFn& c, const Vector& rhs) {
  const int n = opts.n_states();
  Vector x(rhs.size());
  for (int o = 0; o < opts.size(); ++o) {
    const Matrix block = Matrix::Identity(n, n) - opts.gamma() * opts.option_transition(o) * c.c.col(o).asDiagonal();
    x.segment(o * n, n) = block.partialPivLu().solve(rhs.segment(o * n, n));
  }
  if (!x.allFinite()) throw NumericalError("continuation solve produced non-finite values");
  return x;
}

}  // namespace

void CoeffFn::validate(const OptionSet& opts) const {
  if (c.rows() != opts.n_states() || c.cols() != opts.size()) throw ConfigError("coefficient function must be S x O");
  if (!c.allFinite() || c.minCoeff() < 0.0 || c.maxCoeff() > 1.0) {
    throw ConfigError("coefficient function entries must lie in [0,1]");
  }
}

StateOptionOperator coeff_transition_op(const OptionSet& opts, const CoeffFn& c, const PolicyOverOptions& nu) {
  c.validate(opts);
  check_mu(opts, nu);
  const int n = opts.n_states();
  const int m = opts.size();
  StateOptionOperator op{Matrix::Zero(static_cast<Eigen::Index>(n) * m, static_cast<Eigen::Index>(n) * m), n, m};
  for (int o = 0; o < m; ++o) {
    for (int next_o = 0; next_o < m; ++next_o) {
      const Vector weight = c.c.col(o).cwiseProduct(nu.probs.col(next_o));
      op.m.block(o * n, next_o * n, n, n) = opts.option_transition(o) * weight.asDiagonal();
    }
  }
  return op;
}

StateOptionOperator coeff_transition_op(const OptionSet& opts, const CoeffFn& c, KeepCurrent) {
  c.validate(opts);
  const int n = opts.n_states();
  const int m = opts.size();
  StateOptionOperator op{Matrix::Zero(static_cast<Eigen::Index>(n) * m, static_cast<Eigen::Index>(n) * m), n, m};
  for (int o = 0; o < m; ++o) {
    op.m.block(o * n, o * n, n, n) = opts.option_transition(o) * c.c.col(o).asDiagonal();
  }
  return op;
}

StateOptionOperator continuation_op(const OptionSet& opts) {
  const Matrix beta = opts.termination_table(Termination::beta);
  return coeff_transition_op(opts, CoeffFn{Matrix::Ones(beta.rows(), beta.cols()) - beta}, keep_current);
}

StateOptionOperator termination_op(const OptionSet& opts, const PolicyOverOptions& mu) {
  return coeff_transition_op(opts, CoeffFn{opts.termination_table(Termination::beta)}, mu);
}

StateOptionQ target_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q) {
  check_q(opts, q);
  check_mu(opts, mu);
  // Applied blockwise without materializing either operator:
  // (P^{(1-beta) iota} q + P^{beta mu} q)(s,o) = sum_s' p^o(s,s') [(1-beta) q(s',o) + beta E_mu q(s')].
  const Vector expected = expected_q_under_mu(q, mu);
  StateOptionQ out{opts.reward_table()};
  for (int o = 0; o < opts.size(); ++o) {
    const Vector& beta = opts[o].beta;
    const Vector next_value =
        (Vector::Ones(beta.size()) - beta).cwiseProduct(q.values.col(o)) + beta.cwiseProduct(expected);
    out.values.col(o) += opts.gamma() * opts.option_transition(o) * next_value;
  }
  return out;
}

StateOptionQ option_bellman_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q,
                               Termination termination) {
  check_q(opts, q);
  check_mu(opts, mu);
  const Matrix tau = opts.termination_table(termination);
  const Vector expected = expected_q_under_mu(q, mu);
  const int n = opts.n_states();
  Vector rhs(static_cast<Eigen::Index>(n) * opts.size());
  for (int o = 0; o < opts.size(); ++o) {
    rhs.segment(o * n, n) = opts.option_reward(o) + opts.gamma() * opts.option_transition(o) * tau.col(o).cwiseProduct(expected);
  }
  const CoeffFn keep{Matrix::Ones(n, opts.size()) - tau};
  return StateOptionQ::from_flat(solve_keep_current(opts, keep, rhs), n, opts.size());
}

StateOptionQ fixed_point_beta(const OptionSet& opts, const PolicyOverOptions& mu) {
  check_mu(opts, mu);
  if (!(opts.gamma() < 1.0)) throw ConfigError("fixed point needs gamma < 1");
  const int n = opts.n_states();
  const int m = opts.size();
  const CoeffFn beta{opts.termination_table(Termination::beta)};
  const CoeffFn ones = CoeffFn::constant(opts, 1.0);
  const Matrix system = Matrix::Identity(static_cast<Eigen::Index>(n) * m, static_cast<Eigen::Index>(n) * m) -
                        opts.gamma() * (coeff_transition_op(opts, beta, mu).m - coeff_transition_op(opts, beta, keep_current).m) -
                        opts.gamma() * coeff_transition_op(opts, ones, keep_current).m;
  const Vector rhs = StateOptionQ{opts.reward_table()}.flat();
  StateOptionQ q = StateOptionQ::from_flat(system.partialPivLu().solve(rhs), n, m);
  if (!q.values.allFinite()) throw NumericalError("fixed point solve produced non-finite values");
  const double residual = fixed_point_residual(opts, mu, q);
  if (residual > 1e-9 * std::max(1.0, sup_norm(q.values))) {
    throw NumericalError(fmt::format("fixed point residual {:.3g} exceeds 1e-9", residual));
  }
  return q;
}

double fixed_point_residual(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q) {
  return sup_norm(target_op(opts, mu, q).values - q.values);
}

CoeffFn qbeta_trace(const OptionSet& opts, const PolicyOverOptions& mu) {
  check_mu(opts, mu);
  const Matrix zeta = opts.termination_table(Termination::zeta);
  const Matrix beta = opts.termination_table(Termination::beta);
  const Matrix ones = Matrix::Ones(zeta.rows(), zeta.cols());
  return {(ones - zeta).cwiseProduct(ones - beta + beta.cwiseProduct(mu.probs))};
}

CoeffFn onpolicy_trace(const OptionSet& opts) {
  const Matrix beta = opts.termination_table(Termination::beta);
  return {Matrix::Ones(beta.rows(), beta.cols()) - beta};
}

StateOptionQ trace_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q, const CoeffFn& c) {
  c.validate(opts);
  const Vector residual = (target_op(opts, mu, q).values - q.values).reshaped();
  const Vector correction = solve_keep_current(opts, c, residual);
  return StateOptionQ::from_flat(q.flat() + correction, opts.n_states(), opts.size());
}

StateOptionQ expected_qbeta_op(const OptionSet& opts, const PolicyOverOptions& mu, const StateOptionQ& q) {
  return trace_op(opts, mu, q, qbeta_trace(opts, mu));
}

Matrix contraction_eta(const OptionSet& opts, const PolicyOverOptions& mu) {
  return contraction_eta(opts, qbeta_trace(opts, mu));
}

Matrix contraction_eta(const OptionSet& opts, const CoeffFn& c) {
  c.validate(opts);
  const int n = opts.n_states();
  const Vector horizon = solve_keep_current(opts, c, Vector::Ones(static_cast<Eigen::Index>(n) * opts.size()));
  const Vector eta = Vector::Ones(horizon.size()) - (1.0 - opts.gamma()) * horizon;
  return StateOptionQ::from_flat(eta, n, opts.size()).values;
}

CorollaryThreshold corollary_threshold(double zeta, double mu_prob) {
  if (zeta < 0.0 || zeta > 1.0 || mu_prob < 0.0 || mu_prob > 1.0) {
    throw ConfigError("corollary threshold arguments must lie in [0,1]");
  }
  const double denom = mu_prob * (1.0 - zeta) + zeta;
  if (denom <= 0.0) return {0.0, true};
  return {zeta / denom, false};
}

StateOptionQ pessimistic_init(const OptionSet& opts) {
  const TabularMDP& mdp = opts.mdp();
  const double value = mdp.r.minCoeff() >= 0.0 ? 0.0 : -mdp.r_max / (1.0 - mdp.gamma);
  return {Matrix::Constant(opts.n_states(), opts.size(), value)};
}

ControlResult control_iteration(const OptionSet& opts, const StateOptionQ& q0, int k_max, double tol,
                                bool keep_iterates) {
  check_q(opts, q0);
  ControlResult out;
  out.q = q0;
  if (keep_iterates) out.iterates.push_back(q0);
  for (int k = 0; k < k_max; ++k) {
    const PolicyOverOptions mu = greedy_mu(opts, out.q);
    StateOptionQ next = expected_qbeta_op(opts, mu, out.q);
    out.residual = sup_norm(next.values - out.q.values);
    out.q = std::move(next);
    out.iterations = k + 1;
    if (keep_iterates) out.iterates.push_back(out.q);
    if (out.residual <= tol) {
      out.mu = greedy_mu(opts, out.q);
      return out;
    }
  }
  throw ConvergenceError(fmt::format("control iteration did not converge in {} iterations", k_max), out.residual);
}

MonotonicityReport check_monotonicity(const OptionSet& opts, const PolicyOverOptions& mu, const Matrix& beta_hi,
                                      const Matrix& zeta_lo) {
  if (beta_hi.rows() != zeta_lo.rows() || beta_hi.cols() != zeta_lo.cols()) {
    throw ConfigError("termination tables must have matching shapes");
  }
  if ((beta_hi - zeta_lo).minCoeff() < 0.0) throw ConfigError("monotonicity check needs beta_hi >= zeta_lo");
  const Matrix behavior = opts.termination_table(Termination::zeta);
  MonotonicityReport report;
  report.q_hi = fixed_point_beta(opts.with_termination_tables(behavior, beta_hi), mu);
  report.q_lo = fixed_point_beta(opts.with_termination_tables(behavior, zeta_lo), mu);
  report.max_violation = std::max(0.0, (report.q_lo.values - report.q_hi.values).maxCoeff());
  report.holds = report.max_violation <= kMonotonicityTolerance;
  return report;
}

MonotonicityReport check_monotonicity(const OptionSet& opts, const PolicyOverOptions& mu, double beta_hi,
                                      double zeta_lo) {
  return check_monotonicity(opts, mu, Matrix::Constant(opts.n_states(), opts.size(), beta_hi),
                            Matrix::Constant(opts.n_states(), opts.size(), zeta_lo));
}

}  // namespace optterm
