#include "optterm/learners.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "optterm/exact_solver.hpp"

namespace optterm {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last_positive = i;
    if (u < acc) return i;
  }
  if (last_positive < 0) throw ConfigError("cannot sample from an all-zero distribution");
  return last_positive;  // rounding left u just above the accumulated mass
}

std::string_view to_string(SegmentEnd end) {
  switch (end) {
    case SegmentEnd::zeta_sample: return "zeta_sample";
    case SegmentEnd::goal_state: return "goal_state";
    case SegmentEnd::episode_end: return "episode_end";
    case SegmentEnd::step_limit: return "step_limit";
  }
  return "unknown";
}

OptionSegment sample_option_segment(const OptionSet& opts, const PolicyOverOptions& mu, int s0,
                                    double epsilon_opt, int step_budget, Rng& rng) {
  const int option = sample_index(mu.probs.row(s0), rng);
  return run_option(opts, option, s0, epsilon_opt, step_budget, rng, Termination::zeta);
}

OptionSegment run_option(const OptionSet& opts, int option, int s0, double epsilon_opt, int step_budget, Rng& rng,
                         Termination termination) {
  const TabularMDP& mdp = opts.mdp();
  if (mdp.terminal[static_cast<std::size_t>(s0)]) throw ConfigError("cannot start an option in a terminal state");
  if (step_budget < 1) throw ConfigError("step budget must allow at least one step");
  const OptionDef& opt = opts[option];
  const Vector& tau = opt.termination(termination);

  OptionSegment seg;
  seg.option = option;
  seg.states.push_back(s0);
  int s = s0;
  while (true) {
    int a = 0;
    if (epsilon_opt > 0.0 && uniform01(rng) < epsilon_opt) {
      a = std::uniform_int_distribution<int>(0, mdp.n_actions - 1)(rng);
    } else {
      a = sample_index(opt.policy.probs.row(s), rng);
    }
    const int next = sample_index(mdp.p.row(mdp.row(s, a)), rng);
    seg.actions.push_back(a);
    seg.rewards.push_back(mdp.r(s, a));
    seg.states.push_back(next);
    s = next;
    if (mdp.terminal[static_cast<std::size_t>(s)]) {
      seg.end = SegmentEnd::episode_end;
      break;
    }
    if (tau(s) >= 1.0) {
      seg.end = opt.is_goal(s) ? SegmentEnd::goal_state : SegmentEnd::zeta_sample;
      break;
    }
    if (tau(s) > 0.0 && uniform01(rng) < tau(s)) {
      seg.end = SegmentEnd::zeta_sample;
      break;
    }
    if (seg.duration() >= step_budget) {
      seg.end = SegmentEnd::step_limit;
      break;
    }
  }
  return seg;
}

std::vector<TraceStep> trace_steps(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                   const PolicyOverOptions& mu) {
  if (!seg.consistent()) throw ConfigError("inconsistent segment");
  const int o = seg.option;
  std::vector<TraceStep> steps;
  steps.reserve(seg.states.size());
  for (int s : seg.states) {
    steps.push_back({q.values(s, o), expected_q_under_mu(q, mu, s), opts[o].beta(s), mu.probs(s, o)});
  }
  return steps;
}

std::vector<double> qbeta_segment_deltas(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                         const PolicyOverOptions& mu) {
  return qbeta_deltas(seg.rewards, trace_steps(q, seg, opts, mu), opts.gamma());
}

std::vector<double> plain_segment_deltas(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                         const PolicyOverOptions& mu) {
  const auto steps = trace_steps(q, seg, opts, mu);
  const TraceStep& last = steps.back();
  double bootstrap = last.expected_mu;
  if (seg.end == SegmentEnd::step_limit) {
    // Cut mid-option: use the expected continuation under the behavior termination.
    const double z = opts[seg.option].zeta(seg.states.back());
    bootstrap = (1.0 - z) * last.q_option + z * last.expected_mu;
  }
  return plain_deltas(seg.rewards, steps, bootstrap, opts.gamma());
}

std::vector<double> tree_backup_segment_deltas(const StateOptionQ& q, const OptionSegment& seg,
                                               const OptionSet& opts, const PolicyOverOptions& mu) {
  return tree_backup_deltas(seg.rewards, trace_steps(q, seg, opts, mu), opts.gamma());
}

namespace {

StateOptionQ apply_deltas(StateOptionQ q, const OptionSegment& seg, const std::vector<double>& deltas, double alpha) {
  for (std::size_t t = 0; t < deltas.size(); ++t) q.values(seg.states[t], seg.option) += alpha * deltas[t];
  return q;
}

}  // namespace

StateOptionQ qbeta_forward_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                                  const PolicyOverOptions& mu, double alpha) {
  const auto deltas = qbeta_segment_deltas(q, seg, opts, mu);
  return apply_deltas(std::move(q), seg, deltas, alpha);
}

StateOptionQ plain_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                          const PolicyOverOptions& mu, double alpha) {
  const auto deltas = plain_segment_deltas(q, seg, opts, mu);
  return apply_deltas(std::move(q), seg, deltas, alpha);
}

StateOptionQ tree_backup_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                                const PolicyOverOptions& mu, double alpha) {
  const auto deltas = tree_backup_segment_deltas(q, seg, opts, mu);
  return apply_deltas(std::move(q), seg, deltas, alpha);
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::qbeta: return "qbeta";
    case Algorithm::plain_onpolicy: return "plain_onpolicy";
    case Algorithm::plain_offpolicy: return "plain_offpolicy";
    case Algorithm::tree_backup: return "tree_backup";
  }
  return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
  if (name == "qbeta") return Algorithm::qbeta;
  if (name == "plain_onpolicy" || name == "onpolicy-plain") return Algorithm::plain_onpolicy;
  if (name == "plain_offpolicy" || name == "offpolicy-plain" || name == "plain_offpolicy_eval") {
    return Algorithm::plain_offpolicy;
  }
  if (name == "tree_backup") return Algorithm::tree_backup;
  throw ConfigError(fmt::format("unknown algorithm '{}'", name));
}

void LearnerConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!in_unit(epsilon) || !in_unit(epsilon_opt) || !in_unit(beta) || !in_unit(zeta)) {
    throw ConfigError("epsilon, epsilon_opt, beta and zeta must lie in [0,1]");
  }
  if (episodes <= 0 || eval_interval <= 0 || max_episode_steps <= 0 || eval_episodes <= 0) {
    throw ConfigError("episode counts and intervals must be positive");
  }
}

PolicyOverOptions GreedyMu::policy(const StateOptionQ& q) const {
  const OptionSet& opts = *opts_;
  PolicyOverOptions greedy = greedy_mu(opts, q, 0.0);
  if (epsilon_ == 0.0) return greedy;
  const PolicyOverOptions uniform = PolicyOverOptions::uniform(opts);
  return {(1.0 - epsilon_) * greedy.probs + epsilon_ * uniform.probs};
}

int GreedyMu::sample(const StateOptionQ& q, int s, Rng& rng) const {
  const OptionSet& opts = *opts_;
  if (epsilon_ > 0.0 && uniform01(rng) < epsilon_) {
    std::vector<int> allowed;
    for (int o = 0; o < opts.size(); ++o) {
      if (opts[o].initiation[static_cast<std::size_t>(s)]) allowed.push_back(o);
    }
    const int pick = std::uniform_int_distribution<int>(0, static_cast<int>(allowed.size()) - 1)(rng);
    return allowed[static_cast<std::size_t>(pick)];
  }
  int best = -1;
  for (int o = 0; o < opts.size(); ++o) {
    if (!opts[o].initiation[static_cast<std::size_t>(s)]) continue;
    if (best < 0 || q.values(s, o) > q.values(s, best)) best = o;
  }
  return best;
}

double RunResult::final_value(std::string_view metric) const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->metric == metric) return it->value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

namespace {

StateOptionQ apply_algorithm(Algorithm algorithm, StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                             const PolicyOverOptions& mu, double alpha) {
  switch (algorithm) {
    case Algorithm::qbeta: return qbeta_forward_update(std::move(q), seg, opts, mu, alpha);
    case Algorithm::plain_onpolicy:
    case Algorithm::plain_offpolicy: return plain_update(std::move(q), seg, opts, mu, alpha);
    case Algorithm::tree_backup: return tree_backup_update(std::move(q), seg, opts, mu, alpha);
  }
  return q;
}

RunResult make_result(const LearnerConfig& config) {
  RunResult out;
  out.algorithm = std::string(to_string(config.algorithm));
  out.beta = config.beta;
  out.zeta = config.behavior_zeta();
  out.alpha = config.alpha;
  out.seed = config.seed;
  return out;
}

bool is_checkpoint(int episode, const LearnerConfig& config) {
  return episode == 0 || episode % config.eval_interval == 0 || episode == config.episodes;
}

}  // namespace

std::vector<bool> behavior_reachable(const OptionSet& opts, const PolicyOverOptions& mu, int start, bool any_action) {
  const TabularMDP& mdp = opts.mdp();
  const int n = opts.n_states();
  std::vector<bool> seen(static_cast<std::size_t>(n * opts.size()), false);
  std::vector<std::pair<int, int>> stack;
  auto push = [&](int s, int o) {
    const auto k = static_cast<std::size_t>(o * n + s);
    if (seen[k]) return;
    seen[k] = true;
    stack.emplace_back(s, o);
  };
  auto choose = [&](int s) {
    for (int o = 0; o < opts.size(); ++o) {
      if (mu.probs(s, o) > 0.0) push(s, o);
    }
  };
  if (mdp.terminal[static_cast<std::size_t>(start)]) return seen;
  choose(start);
  while (!stack.empty()) {
    const auto [s, o] = stack.back();
    stack.pop_back();
    const OptionDef& opt = opts[o];
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (!any_action && opt.policy.probs(s, a) <= 0.0) continue;
      for (int next = 0; next < n; ++next) {
        if (mdp.prob(s, a, next) <= 0.0 || mdp.terminal[static_cast<std::size_t>(next)]) continue;
        if (opt.zeta(next) < 1.0) push(next, o);
        if (opt.zeta(next) > 0.0) choose(next);
      }
    }
  }
  return seen;
}

void require_finite(const Matrix& values, int episode) {
  if (!values.allFinite()) throw NumericalError(fmt::format("values diverged by episode {}", episode));
}

RunResult run_prediction(const TabularTask& task, const PolicyOverOptions& mu, const LearnerConfig& config) {
  config.validate();
  const OptionSet opts = task.options.with_terminations(config.behavior_zeta(), config.beta);
  mu.validate(opts);
  const StateOptionQ oracle = fixed_point_beta(opts, mu);
  const auto& terminal = opts.mdp().terminal;

  RunResult out = make_result(config);
  StateOptionQ q = StateOptionQ::zeros(opts);
  const std::vector<bool> reachable = behavior_reachable(opts, mu, task.start, config.epsilon_opt > 0.0);
  Rng rng(config.seed);
  auto record = [&](int episode) {
    require_finite(q.values, episode);
    const Matrix err = q.values - oracle.values;
    out.rows.push_back({episode, "rms_error", std::sqrt(err.squaredNorm() / static_cast<double>(err.size()))});
    out.rows.push_back({episode, "sum_abs_error", err.cwiseAbs().sum()});
    double ss = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < reachable.size(); ++k) {
      if (!reachable[k]) continue;
      ss += err.data()[k] * err.data()[k];
      ++count;
    }
    out.rows.push_back({episode, "reachable_rms_error", count > 0 ? std::sqrt(ss / count) : 0.0});
  };
  record(0);
  for (int episode = 1; episode <= config.episodes; ++episode) {
    int s = task.start;
    int steps = 0;
    while (!terminal[static_cast<std::size_t>(s)] && steps < config.max_episode_steps) {
      const OptionSegment seg =
          sample_option_segment(opts, mu, s, config.epsilon_opt, config.max_episode_steps - steps, rng);
      q = apply_algorithm(config.algorithm, std::move(q), seg, opts, mu, config.alpha);
      steps += seg.duration();
      s = seg.states.back();
    }
    if (!terminal[static_cast<std::size_t>(s)]) ++out.truncated_episodes;
    if (is_checkpoint(episode, config)) record(episode);
  }
  return out;
}

Rollout greedy_rollout(const TabularTask& task, const StateOptionQ& q, int max_steps, Rng& rng) {
  const OptionSet& opts = task.options;
  const auto& terminal = opts.mdp().terminal;
  const GreedyMu greedy(opts, 0.0);
  Rollout out;
  double discount = 1.0;
  int s = task.start;
  while (!terminal[static_cast<std::size_t>(s)] && out.steps < max_steps) {
    const int option = greedy.sample(q, s, rng);
    const OptionSegment seg = run_option(opts, option, s, 0.0, max_steps - out.steps, rng, Termination::beta);
    for (double r : seg.rewards) {
      out.undiscounted += r;
      out.discounted += discount * r;
      discount *= opts.gamma();
    }
    out.steps += seg.duration();
    s = seg.states.back();
  }
  out.reached_terminal = terminal[static_cast<std::size_t>(s)];
  return out;
}

RunResult run_control(const TabularTask& task, const LearnerConfig& config) {
  config.validate();
  const OptionSet opts = task.options.with_terminations(config.behavior_zeta(), config.beta);
  const TabularTask eval_task{opts, task.start};
  const auto& terminal = opts.mdp().terminal;
  const GreedyMu behavior(opts, config.epsilon);
  const GreedyMu target(opts, 0.0);

  RunResult out = make_result(config);
  StateOptionQ q = StateOptionQ::zeros(opts);
  Rng rng(config.seed);
  auto record = [&](int episode) {
    require_finite(q.values, episode);
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(episode), 0x5eedu};
    Rng eval_rng(seq);
    double total = 0.0;
    double total_discounted = 0.0;
    for (int i = 0; i < config.eval_episodes; ++i) {
      const Rollout r = greedy_rollout(eval_task, q, config.max_episode_steps, eval_rng);
      total += r.undiscounted;
      total_discounted += r.discounted;
    }
    out.rows.push_back({episode, "eval_return", total / config.eval_episodes});
    out.rows.push_back({episode, "eval_discounted_return", total_discounted / config.eval_episodes});
  };
  record(0);
  for (int episode = 1; episode <= config.episodes; ++episode) {
    int s = task.start;
    int steps = 0;
    while (!terminal[static_cast<std::size_t>(s)] && steps < config.max_episode_steps) {
      const int option = behavior.sample(q, s, rng);
      const OptionSegment seg = run_option(opts, option, s, config.epsilon_opt, config.max_episode_steps - steps, rng);
      const PolicyOverOptions mu = target.policy(q);
      q = apply_algorithm(config.algorithm, std::move(q), seg, opts, mu, config.alpha);
      steps += seg.duration();
      s = seg.states.back();
    }
    if (!terminal[static_cast<std::size_t>(s)]) ++out.truncated_episodes;
    if (is_checkpoint(episode, config)) record(episode);
  }
  return out;
}

}  // namespace optterm
