#include "optterm/core_mdp.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace optterm {

namespace {

// Reshapes a (S*A)-vector laid out as s * A + a into an S x A table.
Matrix unflatten_state_action(const Vector& v, int n_states, int n_actions) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      v.data(), n_states, n_actions);
}

void check_dims(const TabularMDP& mdp, const PrimitivePolicy& pi) {
  if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions) {
    throw ConfigError(fmt::format("policy is {}x{}, MDP has {} states and {} actions",
                                  pi.n_states(), pi.n_actions(), mdp.n_states, mdp.n_actions));
  }
}

void check_dims(const TabularMDP& mdp, const ActionQ& q) {
  if (q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions) {
    throw ConfigError(fmt::format("Q table is {}x{}, MDP has {} states and {} actions",
                                  q.n_states(), q.n_actions(), mdp.n_states, mdp.n_actions));
  }
}

// P applied to a per-state vector, returned as an S x A table.
Matrix expected_next(const TabularMDP& mdp, const Vector& v) {
  return unflatten_state_action(mdp.p * v, mdp.n_states, mdp.n_actions);
}

}  // namespace

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row, double tie_tolerance) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i) {
    if (row(i) > row(best) + tie_tolerance) best = i;
  }
  return best;
}

double sup_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void PrimitivePolicy::validate() const {
  if (probs.rows() == 0 || probs.cols() == 0) throw ConfigError("policy has no states or actions");
  if (!probs.allFinite() || probs.minCoeff() < 0.0 || probs.maxCoeff() > 1.0) {
    throw ConfigError("policy entries must lie in [0,1]");
  }
  for (int s = 0; s < probs.rows(); ++s) {
    if (std::abs(probs.row(s).sum() - 1.0) > kMassTolerance) {
      throw ConfigError(fmt::format("policy row {} sums to {:.17g}", s, probs.row(s).sum()));
    }
  }
}

PrimitivePolicy PrimitivePolicy::uniform(int n_states, int n_actions) {
  return {Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

PrimitivePolicy PrimitivePolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) throw ConfigError("action index out of range");
    probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return {std::move(probs)};
}

TabularMDP::TabularMDP(int n_states_, int n_actions_, double gamma_)
    : n_states(n_states_),
      n_actions(n_actions_),
      p(Matrix::Zero(static_cast<Eigen::Index>(n_states_) * n_actions_, n_states_)),
      r(Matrix::Zero(n_states_, n_actions_)),
      gamma(gamma_),
      terminal(static_cast<std::size_t>(n_states_), false) {
  if (n_states_ <= 0 || n_actions_ <= 0) throw ConfigError("MDP needs at least one state and action");
}

void TabularMDP::make_terminal(int s) {
  terminal.at(static_cast<std::size_t>(s)) = true;
  for (int a = 0; a < n_actions; ++a) {
    p.row(row(s, a)).setZero();
    p(row(s, a), s) = 1.0;
    r(s, a) = 0.0;
  }
}

void TabularMDP::refresh_r_max() { r_max = r.size() ? r.cwiseAbs().maxCoeff() : 0.0; }

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw ConfigError("MDP needs at least one state and action");
  if (p.rows() != static_cast<Eigen::Index>(n_states) * n_actions || p.cols() != n_states) {
    throw ConfigError("transition table has the wrong shape");
  }
  if (r.rows() != n_states || r.cols() != n_actions) throw ConfigError("reward table has the wrong shape");
  if (terminal.size() != static_cast<std::size_t>(n_states)) throw ConfigError("terminal mask has the wrong size");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError(fmt::format("gamma {} outside [0,1)", gamma));
  if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) {
    throw ConfigError("transition probabilities must lie in [0,1]");
  }
  if (!r.allFinite()) throw ConfigError("rewards must be finite");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const double mass = p.row(row(s, a)).sum();
      if (std::abs(mass - 1.0) > kMassTolerance) {
        throw ConfigError(fmt::format("p(.|{},{}) sums to {:.17g}", s, a, mass));
      }
      if (std::abs(r(s, a)) > r_max) {
        throw ConfigError(fmt::format("|r({},{})| = {} exceeds r_max {}", s, a, std::abs(r(s, a)), r_max));
      }
      if (terminal[static_cast<std::size_t>(s)] && (p(row(s, a), s) != 1.0 || r(s, a) != 0.0)) {
        throw ConfigError(fmt::format("terminal state {} must self-loop with zero reward", s));
      }
    }
  }
}

Matrix TabularMDP::policy_transition(const PrimitivePolicy& pi) const {
  check_dims(*this, pi);
  Matrix out = Matrix::Zero(n_states, n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      if (pi.probs(s, a) != 0.0) out.row(s) += pi.probs(s, a) * p.row(row(s, a));
    }
  }
  return out;
}

Vector TabularMDP::policy_reward(const PrimitivePolicy& pi) const {
  check_dims(*this, pi);
  return pi.probs.cwiseProduct(r).rowwise().sum();
}

ActionQ transition_op(const TabularMDP& mdp, const PrimitivePolicy& pi, const ActionQ& q) {
  check_dims(mdp, pi);
  check_dims(mdp, q);
  const Vector v = pi.probs.cwiseProduct(q.values).rowwise().sum();
  return {expected_next(mdp, v)};
}

ActionQ bellman_op(const TabularMDP& mdp, const PrimitivePolicy& pi, const ActionQ& q) {
  ActionQ next = transition_op(mdp, pi, q);
  next.values = mdp.r + mdp.gamma * next.values;
  return next;
}

ActionQ optimality_op(const TabularMDP& mdp, const ActionQ& q) {
  check_dims(mdp, q);
  const Vector v = q.values.rowwise().maxCoeff();
  return {mdp.r + mdp.gamma * expected_next(mdp, v)};
}

ActionQ policy_eval_solve(const TabularMDP& mdp, const PrimitivePolicy& pi) {
  check_dims(mdp, pi);
  if (!(mdp.gamma < 1.0)) throw ConfigError("policy evaluation needs gamma < 1");
  const Matrix system = Matrix::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * mdp.policy_transition(pi);
  const Vector v = system.partialPivLu().solve(mdp.policy_reward(pi));
  ActionQ q{mdp.r + mdp.gamma * expected_next(mdp, v)};
  if (!q.values.allFinite()) throw NumericalError("policy evaluation produced non-finite values");
  const double residual = sup_norm(bellman_op(mdp, pi, q).values - q.values);
  if (residual > 1e-10 * std::max(1.0, sup_norm(q.values))) {
    throw NumericalError(fmt::format("policy evaluation residual {:.3g} too large", residual));
  }
  return q;
}

PrimitivePolicy greedy_policy(const ActionQ& q, double tie_tolerance) {
  std::vector<int> actions(static_cast<std::size_t>(q.n_states()));
  for (int s = 0; s < q.n_states(); ++s) actions[static_cast<std::size_t>(s)] = argmax_lowest(q.values.row(s), tie_tolerance);
  return PrimitivePolicy::deterministic(actions, q.n_actions());
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol, int max_iterations) {
  if (!(mdp.gamma < 1.0)) throw ConfigError("value iteration needs gamma < 1");
  ValueIterationResult out;
  out.q.values = Matrix::Zero(mdp.n_states, mdp.n_actions);
  double residual = 0.0;
  for (int k = 0; k < max_iterations; ++k) {
    ActionQ next = optimality_op(mdp, out.q);
    residual = sup_norm(next.values - out.q.values);
    out.q = std::move(next);
    out.iterations = k + 1;
    // The residual of the new iterate is at most gamma times the step just taken.
    if (mdp.gamma * residual <= tol) break;
  }
  out.residual = sup_norm(optimality_op(mdp, out.q).values - out.q.values);
  if (out.residual > tol) {
    throw ConvergenceError(fmt::format("value iteration stopped after {} sweeps", out.iterations), out.residual);
  }
  out.greedy = greedy_policy(out.q);
  return out;
}

void to_json(nlohmann::json& j, const TabularMDP& mdp) {
  nlohmann::json p = nlohmann::json::array();
  nlohmann::json r = nlohmann::json::array();
  for (int s = 0; s < mdp.n_states; ++s) {
    nlohmann::json ps = nlohmann::json::array();
    nlohmann::json rs = nlohmann::json::array();
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto row = mdp.p.row(mdp.row(s, a));
      ps.push_back(std::vector<double>(row.begin(), row.end()));
      rs.push_back(mdp.r(s, a));
    }
    p.push_back(std::move(ps));
    r.push_back(std::move(rs));
  }
  j = nlohmann::json{{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"gamma", mdp.gamma},
                     {"r_max", mdp.r_max},       {"p", std::move(p)},           {"r", std::move(r)},
                     {"terminal", mdp.terminal}};
}

void from_json(const nlohmann::json& j, TabularMDP& mdp) {
  TabularMDP out(j.at("n_states").get<int>(), j.at("n_actions").get<int>(), j.at("gamma").get<double>());
  out.r_max = j.at("r_max").get<double>();
  const auto& p = j.at("p");
  const auto& r = j.at("r");
  if (p.size() != static_cast<std::size_t>(out.n_states) || r.size() != static_cast<std::size_t>(out.n_states)) {
    throw ConfigError("p and r must have one entry per state");
  }
  for (int s = 0; s < out.n_states; ++s) {
    if (p[s].size() != static_cast<std::size_t>(out.n_actions) || r[s].size() != static_cast<std::size_t>(out.n_actions)) {
      throw ConfigError(fmt::format("state {} must list one entry per action", s));
    }
    for (int a = 0; a < out.n_actions; ++a) {
      const auto row = p[s][a].get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(out.n_states)) throw ConfigError("transition row has wrong length");
      for (int next = 0; next < out.n_states; ++next) out.prob(s, a, next) = row[static_cast<std::size_t>(next)];
      out.r(s, a) = r[s][a].get<double>();
    }
  }
  out.terminal = j.at("terminal").get<std::vector<bool>>();
  out.validate();
  mdp = std::move(out);
}

}  // namespace optterm
