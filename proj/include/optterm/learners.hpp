#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "optterm/options_model.hpp"
#include "optterm/trace_update.hpp"

namespace optterm {

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1).
double uniform01(Rng& rng);
/// Index drawn from a discrete distribution given as a row of probabilities.
int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng);

enum class SegmentEnd {
  zeta_sample,  ///< the behavior termination fired
  goal_state,   ///< the option reached one of its goal states
  episode_end,  ///< the environment reached a terminal state
  step_limit,   ///< the episode step budget ran out mid-option
};

std::string_view to_string(SegmentEnd end);

/// One call-and-return execution of an option: states S_0..S_D, actions
/// A_0..A_{D-1}, rewards R_1..R_D.
template <class State>
struct Segment {
  int option = 0;
  std::vector<State> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  SegmentEnd end = SegmentEnd::zeta_sample;

  int duration() const { return static_cast<int>(rewards.size()); }
  bool consistent() const {
    return !rewards.empty() && actions.size() == rewards.size() && states.size() == rewards.size() + 1;
  }
};

using OptionSegment = Segment<int>;

/// Tabular task: an MDP, its options, and the episode start state.
struct TabularTask {
  OptionSet options;
  int start = 0;
};

/// Draws o ~ mu(.|s0) and runs it under epsilon_opt-softened pi^o until zeta
/// fires, a goal or terminal state is reached, or `step_budget` steps elapse.
OptionSegment sample_option_segment(const OptionSet& opts, const PolicyOverOptions& mu, int s0,
                                    double epsilon_opt, int step_budget, Rng& rng);

/// Same with the option already chosen; `termination` picks which condition ends it.
OptionSegment run_option(const OptionSet& opts, int option, int s0, double epsilon_opt, int step_budget, Rng& rng,
                         Termination termination = Termination::zeta);

/// Per-step view of a tabular segment for the trace core.
std::vector<TraceStep> trace_steps(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                   const PolicyOverOptions& mu);

/// Q(beta) forward-view corrections Delta_0..Delta_{D-1} for one segment.
std::vector<double> qbeta_segment_deltas(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                         const PolicyOverOptions& mu);
/// Plain multi-step intra-option corrections, bootstrapping with E_mu q at the end.
std::vector<double> plain_segment_deltas(const StateOptionQ& q, const OptionSegment& seg, const OptionSet& opts,
                                         const PolicyOverOptions& mu);
/// Option-level Tree-Backup corrections.
std::vector<double> tree_backup_segment_deltas(const StateOptionQ& q, const OptionSegment& seg,
                                               const OptionSet& opts, const PolicyOverOptions& mu);

/// q(S_t, o) += alpha Delta_t for every t, all Delta_t from the pre-update q.
StateOptionQ qbeta_forward_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                                  const PolicyOverOptions& mu, double alpha);
StateOptionQ plain_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                          const PolicyOverOptions& mu, double alpha);
StateOptionQ tree_backup_update(StateOptionQ q, const OptionSegment& seg, const OptionSet& opts,
                                const PolicyOverOptions& mu, double alpha);

enum class Algorithm { qbeta, plain_onpolicy, plain_offpolicy, tree_backup };

std::string_view to_string(Algorithm a);
/// Accepts the canonical names plus "onpolicy-plain" / "offpolicy-plain".
Algorithm algorithm_from_string(std::string_view name);

struct LearnerConfig {
  Algorithm algorithm = Algorithm::qbeta;
  double alpha = 0.1;
  /// Option-level exploration at choice points during learning.
  double epsilon = 0.0;
  /// Intra-option action softening during learning.
  double epsilon_opt = 0.0;
  /// Target termination. plain_onpolicy also behaves with it.
  double beta = 1.0;
  /// Behavior termination (ignored by plain_onpolicy).
  double zeta = 0.0;
  std::uint64_t seed = 0;
  int episodes = 1000;
  int eval_interval = 100;
  int max_episode_steps = 10'000;
  /// Greedy evaluation rollouts per checkpoint (control only).
  int eval_episodes = 1;

  void validate() const;
  /// Behavior termination actually used when sampling.
  double behavior_zeta() const { return algorithm == Algorithm::plain_onpolicy ? beta : zeta; }
};

/// Greedy view of a Q table with epsilon-mixing over initiable options.
class GreedyMu {
 public:
  GreedyMu(const OptionSet& opts, double epsilon) : opts_(&opts), epsilon_(epsilon) {}

  /// Point mass on the argmax (lowest id on ties) when epsilon = 0.
  PolicyOverOptions policy(const StateOptionQ& q) const;
  int sample(const StateOptionQ& q, int s, Rng& rng) const;

 private:
  const OptionSet* opts_;
  double epsilon_;
};

struct MetricRow {
  int episode = 0;
  std::string metric;
  double value = 0.0;
};

/// Metric time series of one run plus the configuration point that produced it.
struct RunResult {
  std::string algorithm;
  double beta = 0.0;
  double zeta = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  /// Episodes cut short by the step budget.
  int truncated_episodes = 0;

  /// Last recorded value of `metric`; NaN when absent.
  double final_value(std::string_view metric) const;
};

/// (s, o) pairs that can be current under call-and-return execution from
/// `start`, flattened as o * S + s. Follows the option's own actions (every
/// action when `any_action`), behavior terminations and mu's choices.
/// Terminal states are never included.
std::vector<bool> behavior_reachable(const OptionSet& opts, const PolicyOverOptions& mu, int start, bool any_action);

/// Throws NumericalError when a learner's values stop being finite, which is
/// how too large a step size shows up.
void require_finite(const Matrix& values, int episode);

/// Policy evaluation with a fixed mu. Records "rms_error" and "sum_abs_error"
/// between q and the beta-target fixed point under the same mu, plus
/// "reachable_rms_error" over the pairs behavior can visit at all.
RunResult run_prediction(const TabularTask& task, const PolicyOverOptions& mu, const LearnerConfig& config);

/// Control with epsilon-greedy option choice and greedy targets. Every
/// `eval_interval` episodes runs greedy rollouts that terminate options with
/// the target beta and records "eval_return" (undiscounted) and
/// "eval_discounted_return".
RunResult run_control(const TabularTask& task, const LearnerConfig& config);

struct Rollout {
  double undiscounted = 0.0;
  double discounted = 0.0;
  int steps = 0;
  bool reached_terminal = false;
};

/// Greedy call-and-return rollout from the start state; options terminate
/// with probability beta (the option set's target termination).
Rollout greedy_rollout(const TabularTask& task, const StateOptionQ& q, int max_steps, Rng& rng);

}  // namespace optterm
