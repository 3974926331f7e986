#include "optterm/options_model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace optterm {

namespace {

void force_termination(const TabularMDP& mdp, const std::vector<int>& goals, Vector& tau) {
  for (int g : goals) {
    if (g < 0 || g >= mdp.n_states) throw ConfigError(fmt::format("goal state {} out of range", g));
    tau(g) = 1.0;
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.terminal[static_cast<std::size_t>(s)]) tau(s) = 1.0;
  }
}

void validate_option(const TabularMDP& mdp, const OptionDef& o) {
  o.policy.validate();
  if (o.policy.n_states() != mdp.n_states || o.policy.n_actions() != mdp.n_actions) {
    throw ConfigError(fmt::format("option {} policy has the wrong shape", o.id));
  }
  if (o.initiation.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw ConfigError(fmt::format("option {} initiation mask has the wrong size", o.id));
  }
  for (const Vector* tau : {&o.zeta, &o.beta}) {
    if (tau->size() != mdp.n_states) throw ConfigError(fmt::format("option {} termination has the wrong size", o.id));
    if (!tau->allFinite() || tau->minCoeff() < 0.0 || tau->maxCoeff() > 1.0) {
      throw ConfigError(fmt::format("option {} termination probabilities must lie in [0,1]", o.id));
    }
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    const bool forced = mdp.terminal[static_cast<std::size_t>(s)] || o.is_goal(s);
    if (forced && (o.zeta(s) != 1.0 || o.beta(s) != 1.0)) {
      throw ConfigError(fmt::format("option {} must terminate with certainty in state {}", o.id, s));
    }
  }
}

}  // namespace

bool OptionDef::is_goal(int s) const {
  return std::find(goal_states.begin(), goal_states.end(), s) != goal_states.end();
}

OptionDef make_option(const TabularMDP& mdp, int id, PrimitivePolicy policy, double zeta, double beta,
                      std::vector<int> goal_states) {
  return make_option(mdp, id, std::move(policy), Vector::Constant(mdp.n_states, zeta),
                     Vector::Constant(mdp.n_states, beta), std::move(goal_states));
}

OptionDef make_option(const TabularMDP& mdp, int id, PrimitivePolicy policy, Vector zeta, Vector beta,
                      std::vector<int> goal_states) {
  OptionDef o;
  o.id = id;
  o.initiation.assign(static_cast<std::size_t>(mdp.n_states), true);
  o.policy = std::move(policy);
  o.zeta = std::move(zeta);
  o.beta = std::move(beta);
  o.goal_states = std::move(goal_states);
  if (o.zeta.size() != mdp.n_states || o.beta.size() != mdp.n_states) {
    throw ConfigError(fmt::format("option {} termination has the wrong size", id));
  }
  auto in_unit = [](const Vector& v) { return v.allFinite() && v.minCoeff() >= 0.0 && v.maxCoeff() <= 1.0; };
  if (!in_unit(o.zeta) || !in_unit(o.beta)) {
    throw ConfigError(fmt::format("option {} terminations must lie in [0,1]", id));
  }
  force_termination(mdp, o.goal_states, o.zeta);
  force_termination(mdp, o.goal_states, o.beta);
  return o;
}

OptionSet::OptionSet(std::shared_ptr<const TabularMDP> mdp, std::vector<OptionDef> options)
    : OptionSet(std::move(mdp), std::move(options), nullptr) {}

OptionSet::OptionSet(std::shared_ptr<const TabularMDP> mdp, std::vector<OptionDef> options,
                     std::shared_ptr<const std::vector<Induced>> induced)
    : mdp_(std::move(mdp)), options_(std::move(options)), induced_(std::move(induced)) {
  if (!mdp_) throw ConfigError("option set needs an MDP");
  if (options_.empty()) throw ConfigError("option set is empty");
  for (std::size_t i = 0; i < options_.size(); ++i) {
    if (options_[i].id != static_cast<int>(i)) {
      throw ConfigError(fmt::format("option ids must be contiguous from 0; slot {} has id {}", i, options_[i].id));
    }
    validate_option(*mdp_, options_[i]);
  }
  if (!induced_) {
    auto induced_chains = std::make_shared<std::vector<Induced>>();
    induced_chains->reserve(options_.size());
    for (const auto& o : options_) {
      induced_chains->push_back({mdp_->policy_transition(o.policy), mdp_->policy_reward(o.policy)});
    }
    induced_ = std::move(induced_chains);
  }
}

Matrix OptionSet::reward_table() const {
  Matrix out(n_states(), size());
  for (int o = 0; o < size(); ++o) out.col(o) = option_reward(o);
  return out;
}

Matrix OptionSet::termination_table(Termination which) const {
  Matrix out(n_states(), size());
  for (int o = 0; o < size(); ++o) out.col(o) = options_[static_cast<std::size_t>(o)].termination(which);
  return out;
}

OptionSet OptionSet::with_termination_tables(const Matrix& zeta, const Matrix& beta) const {
  if (zeta.rows() != n_states() || zeta.cols() != size() || beta.rows() != n_states() || beta.cols() != size()) {
    throw ConfigError("termination tables must be S x O");
  }
  std::vector<OptionDef> options = options_;
  for (int o = 0; o < size(); ++o) {
    auto& opt = options[static_cast<std::size_t>(o)];
    opt.zeta = zeta.col(o);
    opt.beta = beta.col(o);
    force_termination(*mdp_, opt.goal_states, opt.zeta);
    force_termination(*mdp_, opt.goal_states, opt.beta);
  }
  return OptionSet(mdp_, std::move(options), induced_);
}

OptionSet OptionSet::with_terminations(double zeta, double beta) const {
  return with_termination_tables(Matrix::Constant(n_states(), size(), zeta), Matrix::Constant(n_states(), size(), beta));
}

OptionSet OptionSet::with_beta(double beta) const {
  return with_termination_tables(termination_table(Termination::zeta), Matrix::Constant(n_states(), size(), beta));
}

OptionSet OptionSet::with_zeta(double zeta) const {
  return with_termination_tables(Matrix::Constant(n_states(), size(), zeta), termination_table(Termination::beta));
}

void PolicyOverOptions::validate(const OptionSet& opts) const {
  if (probs.rows() != opts.n_states() || probs.cols() != opts.size()) {
    throw ConfigError("policy over options must be S x O");
  }
  if (!probs.allFinite() || probs.minCoeff() < 0.0 || probs.maxCoeff() > 1.0) {
    throw ConfigError("policy over options entries must lie in [0,1]");
  }
  for (int s = 0; s < opts.n_states(); ++s) {
    if (std::abs(probs.row(s).sum() - 1.0) > kMassTolerance) {
      throw ConfigError(fmt::format("policy over options row {} sums to {:.17g}", s, probs.row(s).sum()));
    }
    for (int o = 0; o < opts.size(); ++o) {
      if (probs(s, o) > 0.0 && !opts[o].initiation[static_cast<std::size_t>(s)]) {
        throw ConfigError(fmt::format("option {} cannot start in state {}", o, s));
      }
    }
  }
}

PolicyOverOptions PolicyOverOptions::uniform(const OptionSet& opts) {
  Matrix probs = Matrix::Zero(opts.n_states(), opts.size());
  for (int s = 0; s < opts.n_states(); ++s) {
    int count = 0;
    for (int o = 0; o < opts.size(); ++o) count += opts[o].initiation[static_cast<std::size_t>(s)] ? 1 : 0;
    if (count == 0) throw ConfigError(fmt::format("no option can start in state {}", s));
    for (int o = 0; o < opts.size(); ++o) {
      if (opts[o].initiation[static_cast<std::size_t>(s)]) probs(s, o) = 1.0 / count;
    }
  }
  return {std::move(probs)};
}

PolicyOverOptions PolicyOverOptions::deterministic(const std::vector<int>& choice, int n_options) {
  Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(choice.size()), n_options);
  for (std::size_t s = 0; s < choice.size(); ++s) {
    if (choice[s] < 0 || choice[s] >= n_options) throw ConfigError("option index out of range");
    probs(static_cast<Eigen::Index>(s), choice[s]) = 1.0;
  }
  return {std::move(probs)};
}

PrimitivePolicy marginal_policy(const OptionSet& opts, const PolicyOverOptions& mu) {
  Matrix kappa = Matrix::Zero(opts.n_states(), opts.mdp().n_actions);
  for (int o = 0; o < opts.size(); ++o) {
    kappa += mu.probs.col(o).asDiagonal() * opts[o].policy.probs;
  }
  return {std::move(kappa)};
}

double expected_q_under_mu(const StateOptionQ& q, const PolicyOverOptions& mu, int s) {
  return q.values.row(s).dot(mu.probs.row(s));
}

Vector expected_q_under_mu(const StateOptionQ& q, const PolicyOverOptions& mu) {
  return q.values.cwiseProduct(mu.probs).rowwise().sum();
}

PolicyOverOptions greedy_mu(const OptionSet& opts, const StateOptionQ& q, double tie_tolerance) {
  std::vector<int> choice(static_cast<std::size_t>(opts.n_states()));
  for (int s = 0; s < opts.n_states(); ++s) {
    int best = -1;
    for (int o = 0; o < opts.size(); ++o) {
      if (!opts[o].initiation[static_cast<std::size_t>(s)]) continue;
      if (best < 0 || q.values(s, o) > q.values(s, best) + tie_tolerance) best = o;
    }
    if (best < 0) throw ConfigError(fmt::format("no option can start in state {}", s));
    choice[static_cast<std::size_t>(s)] = best;
  }
  return PolicyOverOptions::deterministic(choice, opts.size());
}

SmdpModel smdp_models(const OptionSet& opts, Termination termination) {
  const int n = opts.n_states();
  const double gamma = opts.gamma();
  SmdpModel model;
  for (int o = 0; o < opts.size(); ++o) {
    const Vector& tau = opts[o].termination(termination);
    const Matrix& chain = opts.option_transition(o);
    const Matrix continue_part = chain * (Vector::Ones(n) - tau).asDiagonal();
    const Matrix system = Matrix::Identity(n, n) - gamma * continue_part;
    const Eigen::FullPivLU<Matrix> lu(system);
    if (!lu.isInvertible()) {
      throw NumericalError(fmt::format("option {} never terminates from some state; semi-MDP system is singular", o));
    }
    Vector reward = lu.solve(opts.option_reward(o));
    Matrix transition = lu.solve(gamma * chain * tau.asDiagonal());
    const double residual =
        std::max(sup_norm(system * reward - opts.option_reward(o)), sup_norm(system * transition - gamma * chain * tau.asDiagonal()));
    if (!reward.allFinite() || !transition.allFinite() || residual > 1e-10 * std::max(1.0, sup_norm(reward))) {
      throw NumericalError(fmt::format("semi-MDP model for option {} has residual {:.3g}", o, residual));
    }
    model.reward.push_back(std::move(reward));
    model.transition.push_back(std::move(transition));
  }
  return model;
}

nlohmann::json option_set_to_json(const OptionSet& opts) {
  nlohmann::json options = nlohmann::json::array();
  for (const auto& o : opts) {
    nlohmann::json policy = nlohmann::json::array();
    for (int s = 0; s < o.policy.n_states(); ++s) {
      const auto row = o.policy.probs.row(s);
      policy.push_back(std::vector<double>(row.begin(), row.end()));
    }
    options.push_back({{"id", o.id},
                       {"policy", std::move(policy)},
                       {"zeta", std::vector<double>(o.zeta.begin(), o.zeta.end())},
                       {"beta", std::vector<double>(o.beta.begin(), o.beta.end())},
                       {"goals", o.goal_states},
                       {"initiation", o.initiation}});
  }
  return {{"mdp", opts.mdp()}, {"options", std::move(options)}};
}

OptionSet option_set_from_json(const nlohmann::json& j) {
  auto mdp = std::make_shared<TabularMDP>(j.at("mdp").get<TabularMDP>());
  std::vector<OptionDef> options;
  for (const auto& jo : j.at("options")) {
    OptionDef o;
    o.id = jo.at("id").get<int>();
    const auto rows = jo.at("policy").get<std::vector<std::vector<double>>>();
    if (rows.size() != static_cast<std::size_t>(mdp->n_states)) throw ConfigError("option policy needs one row per state");
    o.policy.probs.resize(mdp->n_states, mdp->n_actions);
    for (int s = 0; s < mdp->n_states; ++s) {
      if (rows[static_cast<std::size_t>(s)].size() != static_cast<std::size_t>(mdp->n_actions)) {
        throw ConfigError("option policy row has the wrong length");
      }
      for (int a = 0; a < mdp->n_actions; ++a) o.policy.probs(s, a) = rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    }
    const auto zeta = jo.at("zeta").get<std::vector<double>>();
    const auto beta = jo.at("beta").get<std::vector<double>>();
    o.zeta = Eigen::Map<const Vector>(zeta.data(), static_cast<Eigen::Index>(zeta.size()));
    o.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    o.goal_states = jo.at("goals").get<std::vector<int>>();
    o.initiation = jo.value("initiation", std::vector<bool>(static_cast<std::size_t>(mdp->n_states), true));
    options.push_back(std::move(o));
  }
  return OptionSet(std::move(mdp), std::move(options));
}

}  // namespace optterm
