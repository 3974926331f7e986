#pragma once

#include <vector>

#include "optterm/env/pinball.hpp"
#include "optterm/env/tile_coder.hpp"
#include "optterm/learners.hpp"

namespace optterm {

using PinballSegment = Segment<PinballState>;

/// Tile-coded option values for the landmark options of one board.
class PinballAgent {
 public:
  PinballAgent(const PinballConfig& cfg, TileCoderConfig tiles = {});

  const PinballConfig& config() const { return cfg_; }
  const std::vector<LandmarkOption>& options() const { return options_; }
  int n_options() const { return static_cast<int>(options_.size()); }
  const TileCoder& coder() const { return coder_; }
  TileWeights& weights() { return weights_; }
  const TileWeights& weights() const { return weights_; }

  /// Options whose initiation region contains `s`; every option when none does.
  std::vector<int> initiable(const PinballState& s) const;
  /// Values of all options at `s`.
  Vector values(const PinballState& s) const;
  /// Highest-valued initiable option, lowest id on ties.
  int greedy(const PinballState& s) const;
  /// Target termination of `option` at `s`: 1 at its landmark, `beta` elsewhere.
  double beta_at(int option, const PinballState& s, double beta) const;

  /// Runs `option` from `s0`, each step taking the landmark controller's action
  /// (uniformly random with probability epsilon_opt). Stops at the goal hole,
  /// at the landmark, when a termination draw with probability `tau` fires,
  /// or after `step_budget` steps.
  PinballSegment run_option(int option, const PinballState& s0, double tau, double epsilon_opt, int step_budget,
                            Rng& rng) const;

  /// Trace-core view of a segment under the greedy target policy. A segment
  /// that ends in the hole reads zero values there.
  std::vector<TraceStep> trace_steps(const PinballSegment& seg, double beta) const;

  /// Applies one learning update for `algorithm` and returns the corrections.
  std::vector<double> learn(Algorithm algorithm, const PinballSegment& seg, double beta, double zeta, double alpha);

  /// Feature vectors seen so far that lacked exactly one index per tiling.
  std::int64_t tile_violations() const { return tile_violations_; }

 private:
  PinballConfig cfg_;
  std::vector<LandmarkOption> options_;
  TileCoder coder_;
  TileWeights weights_;
  mutable std::int64_t tile_violations_ = 0;

  std::vector<int> features(const PinballState& s) const;
};

struct PinballRollout {
  double undiscounted = 0.0;
  double discounted = 0.0;
  int steps = 0;
  bool reached_goal = false;
};

/// Greedy call-and-return episode without exploration; options stop with beta.
PinballRollout pinball_greedy_rollout(const PinballAgent& agent, double beta, Rng& rng);

/// Control on the board. Records "eval_return", "eval_discounted_return",
/// "eval_success" and "eval_steps" at checkpoints, and "clamped_states" plus
/// "tile_violations" (feature vectors without one index per tiling) at the end.
RunResult run_pinball_control(const PinballConfig& cfg, const LearnerConfig& config, const TileCoderConfig& tiles = {});

}  // namespace optterm
