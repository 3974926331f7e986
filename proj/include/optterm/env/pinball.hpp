#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace optterm {

using Vec2 = Eigen::Vector2d;

struct PinballPhysics {
  double drag = 0.995;
  double restitution = 0.8;
  /// Velocity change applied by a force action.
  double impulse = 0.2;
  int substeps = 20;
  double ball_radius = 0.02;
  /// Distance travelled per step at unit speed.
  double dt = 0.05;
};

struct PinballConfig {
  /// Convex or concave polygons, vertices in order.
  std::vector<std::vector<Vec2>> obstacles;
  std::vector<Vec2> landmarks;
  Vec2 goal{0.9, 0.9};
  double goal_radius = 0.04;
  Vec2 start{0.1, 0.1};
  PinballPhysics physics;
  double r_step = -1.0;
  double r_final = 10'000.0;
  double initiation_distance = 0.3;
  double termination_distance = 0.03;
  double gamma = 0.99;
  int max_episode_steps = 1000;

  /// Throws ConfigError on inconsistent geometry or constants.
  void validate() const;
};

PinballConfig pinball_config_from_json(const nlohmann::json& j);
nlohmann::json pinball_config_to_json(const PinballConfig& cfg);
PinballConfig load_pinball_config(const std::filesystem::path& path);

struct PinballState {
  double x = 0.0;
  double y = 0.0;
  double xdot = 0.0;
  double ydot = 0.0;

  Vec2 position() const { return {x, y}; }
  Vec2 velocity() const { return {xdot, ydot}; }
  bool operator==(const PinballState&) const = default;
};

enum PinballAction : int { kPushRight = 0, kPushUp = 1, kPushLeft = 2, kPushDown = 3, kNoForce = 4 };
inline constexpr int kPinballActions = 5;

struct PinballStep {
  PinballState next;
  double reward = 0.0;
  bool done = false;
};

PinballState pinball_start(const PinballConfig& cfg);

/// One control step: impulse, velocity clamp to [-1,1], sub-stepped motion
/// with damped specular bounces off walls and obstacles, then drag.
PinballStep pinball_step(const PinballConfig& cfg, const PinballState& state, int action);

/// True if a ball centred at `p` overlaps an obstacle or leaves the board.
bool pinball_collides(const PinballConfig& cfg, const Vec2& p);

double kinetic_energy(const PinballState& s);

/// Option that steers the ball to a landmark.
struct LandmarkOption {
  int id = 0;
  Vec2 landmark;
  double initiation_distance = 0.3;
  double termination_distance = 0.03;

  double distance(const PinballState& s) const { return (s.position() - landmark).norm(); }
  bool can_initiate(const PinballState& s) const { return distance(s) <= initiation_distance; }
  bool reached(const PinballState& s) const { return distance(s) <= termination_distance; }
};

std::vector<LandmarkOption> landmark_options(const PinballConfig& cfg);

/// Greedy one-step controller: the action whose predicted next position is
/// closest to the landmark, lowest action id on ties.
int landmark_option_policy(const PinballConfig& cfg, const LandmarkOption& option, const PinballState& s);

}  // namespace optterm
