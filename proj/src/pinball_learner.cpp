#include "optterm/pinball_learner.hpp"

#include <cmath>
#include <functional>

#include "optterm/errors.hpp"

namespace optterm {

namespace {

struct SegmentView {
  std::vector<std::vector<int>> features;  // S_0 .. S_{D-1}, plus S_D unless it is the hole
  std::vector<TraceStep> steps;
};

}  // namespace

PinballAgent::PinballAgent(const PinballConfig& cfg, TileCoderConfig tiles)
    : cfg_(cfg), options_(landmark_options(cfg)), coder_(tiles), weights_(coder_, static_cast<int>(options_.size())) {
  cfg_.validate();
}

std::vector<int> PinballAgent::features(const PinballState& s) const {
  std::vector<int> f = coder_.features(s);
  const int per_tiling = coder_.n_features() / coder_.n_tilings();
  bool ok = static_cast<int>(f.size()) == coder_.n_tilings();
  for (std::size_t k = 0; ok && k < f.size(); ++k) {
    ok = f[k] >= static_cast<int>(k) * per_tiling && f[k] < static_cast<int>(k + 1) * per_tiling;
  }
  if (!ok) ++tile_violations_;
  return f;
}

std::vector<int> PinballAgent::initiable(const PinballState& s) const {
  std::vector<int> out;
  for (const auto& o : options_) {
    if (o.can_initiate(s)) out.push_back(o.id);
  }
  if (out.empty()) {
    for (const auto& o : options_) out.push_back(o.id);
  }
  return out;
}

Vector PinballAgent::values(const PinballState& s) const {
  const std::vector<int> f = features(s);
  Vector v(n_options());
  for (int o = 0; o < n_options(); ++o) v(o) = q_value(weights_, f, o);
  return v;
}

int PinballAgent::greedy(const PinballState& s) const {
  const Vector v = values(s);
  int best = -1;
  for (int o : initiable(s)) {
    if (best < 0 || v(o) > v(best)) best = o;
  }
  return best;
}

double PinballAgent::beta_at(int option, const PinballState& s, double beta) const {
  return options_[static_cast<std::size_t>(option)].reached(s) ? 1.0 : beta;
}

PinballSegment PinballAgent::run_option(int option, const PinballState& s0, double tau, double epsilon_opt,
                                        int step_budget, Rng& rng) const {
  if (step_budget < 1) throw ConfigError("step budget must allow at least one step");
  const LandmarkOption& opt = options_.at(static_cast<std::size_t>(option));
  PinballSegment seg;
  seg.option = option;
  seg.states.push_back(s0);
  PinballState s = s0;
  while (true) {
    int a = landmark_option_policy(cfg_, opt, s);
    if (epsilon_opt > 0.0 && uniform01(rng) < epsilon_opt) {
      a = std::uniform_int_distribution<int>(0, kPinballActions - 1)(rng);
    }
    const PinballStep step = pinball_step(cfg_, s, a);
    seg.actions.push_back(a);
    seg.rewards.push_back(step.reward);
    seg.states.push_back(step.next);
    s = step.next;
    if (step.done) {
      seg.end = SegmentEnd::episode_end;
      break;
    }
    if (opt.reached(s)) {
      seg.end = SegmentEnd::goal_state;
      break;
    }
    if (tau >= 1.0 || (tau > 0.0 && uniform01(rng) < tau)) {
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

namespace {

SegmentView view_segment(const PinballAgent& agent, const PinballSegment& seg, double beta,
                         const std::function<std::vector<int>(const PinballState&)>& features) {
  if (!seg.consistent()) throw ConfigError("inconsistent pinball segment");
  SegmentView view;
  const int o = seg.option;
  const std::size_t d = seg.rewards.size();
  for (std::size_t t = 0; t <= d; ++t) {
    const PinballState& s = seg.states[t];
    if (t == d && seg.end == SegmentEnd::episode_end) {
      view.steps.push_back({0.0, 0.0, 1.0, 0.0});
      break;
    }
    view.features.push_back(features(s));
    const auto& f = view.features.back();
    Vector v(agent.n_options());
    for (int k = 0; k < agent.n_options(); ++k) v(k) = q_value(agent.weights(), f, k);
    int best = -1;
    for (int k : agent.initiable(s)) {
      if (best < 0 || v(k) > v(best)) best = k;
    }
    view.steps.push_back({v(o), v(best), agent.beta_at(o, s, beta), best == o ? 1.0 : 0.0});
  }
  return view;
}

}  // namespace

std::vector<TraceStep> PinballAgent::trace_steps(const PinballSegment& seg, double beta) const {
  return view_segment(*this, seg, beta, [this](const PinballState& s) { return features(s); }).steps;
}

std::vector<double> PinballAgent::learn(Algorithm algorithm, const PinballSegment& seg, double beta, double zeta,
                                        double alpha) {
  const SegmentView view = view_segment(*this, seg, beta, [this](const PinballState& s) { return features(s); });
  const double gamma = cfg_.gamma;
  std::vector<double> deltas;
  switch (algorithm) {
    case Algorithm::qbeta: deltas = qbeta_deltas(seg.rewards, view.steps, gamma); break;
    case Algorithm::tree_backup: deltas = tree_backup_deltas(seg.rewards, view.steps, gamma); break;
    case Algorithm::plain_onpolicy:
    case Algorithm::plain_offpolicy: {
      const TraceStep& last = view.steps.back();
      double bootstrap = last.expected_mu;
      if (seg.end == SegmentEnd::step_limit) bootstrap = (1.0 - zeta) * last.q_option + zeta * last.expected_mu;
      deltas = plain_deltas(seg.rewards, view.steps, bootstrap, gamma);
      break;
    }
  }
  for (std::size_t t = 0; t < deltas.size(); ++t) apply_update(weights_, view.features[t], seg.option, deltas[t], alpha);
  return deltas;
}

PinballRollout pinball_greedy_rollout(const PinballAgent& agent, double beta, Rng& rng) {
  const PinballConfig& cfg = agent.config();
  PinballRollout out;
  PinballState s = pinball_start(cfg);
  double discount = 1.0;
  while (!out.reached_goal && out.steps < cfg.max_episode_steps) {
    const int option = agent.greedy(s);
    const PinballSegment seg = agent.run_option(option, s, beta, 0.0, cfg.max_episode_steps - out.steps, rng);
    for (double r : seg.rewards) {
      out.undiscounted += r;
      out.discounted += discount * r;
      discount *= cfg.gamma;
    }
    out.steps += seg.duration();
    out.reached_goal = seg.end == SegmentEnd::episode_end;
    s = seg.states.back();
  }
  return out;
}

RunResult run_pinball_control(const PinballConfig& cfg, const LearnerConfig& config, const TileCoderConfig& tiles) {
  config.validate();
  PinballAgent agent(cfg, tiles);
  const double zeta = config.behavior_zeta();
  const int max_steps = std::min(cfg.max_episode_steps, config.max_episode_steps);

  RunResult out;
  out.algorithm = std::string(to_string(config.algorithm));
  out.beta = config.beta;
  out.zeta = zeta;
  out.alpha = config.alpha;
  out.seed = config.seed;

  Rng rng(config.seed);
  auto record = [&](int episode) {
    require_finite(agent.weights().w, episode);
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(episode), 0x9b11u};
    Rng eval_rng(seq);
    double total = 0.0;
    double total_discounted = 0.0;
    double successes = 0.0;
    double steps = 0.0;
    for (int i = 0; i < config.eval_episodes; ++i) {
      const PinballRollout r = pinball_greedy_rollout(agent, config.beta, eval_rng);
      total += r.undiscounted;
      total_discounted += r.discounted;
      successes += r.reached_goal ? 1.0 : 0.0;
      steps += r.steps;
    }
    const double n = config.eval_episodes;
    out.rows.push_back({episode, "eval_return", total / n});
    out.rows.push_back({episode, "eval_discounted_return", total_discounted / n});
    out.rows.push_back({episode, "eval_success", successes / n});
    out.rows.push_back({episode, "eval_steps", steps / n});
  };

  record(0);
  for (int episode = 1; episode <= config.episodes; ++episode) {
    PinballState s = pinball_start(cfg);
    int steps = 0;
    bool done = false;
    while (!done && steps < max_steps) {
      const std::vector<int> allowed = agent.initiable(s);
      int option = agent.greedy(s);
      if (config.epsilon > 0.0 && uniform01(rng) < config.epsilon) {
        option = allowed[static_cast<std::size_t>(
            std::uniform_int_distribution<int>(0, static_cast<int>(allowed.size()) - 1)(rng))];
      }
      const PinballSegment seg = agent.run_option(option, s, zeta, config.epsilon_opt, max_steps - steps, rng);
      agent.learn(config.algorithm, seg, config.beta, zeta, config.alpha);
      steps += seg.duration();
      s = seg.states.back();
      done = seg.end == SegmentEnd::episode_end;
    }
    if (!done) ++out.truncated_episodes;
    if (episode == config.episodes || episode % config.eval_interval == 0) record(episode);
  }
  out.rows.push_back({config.episodes, "clamped_states", static_cast<double>(agent.coder().clamped_count())});
  out.rows.push_back({config.episodes, "tile_violations", static_cast<double>(agent.tile_violations())});
  return out;
}

}  // namespace optterm
