#include "optterm/env/pinball.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optterm/errors.hpp"

namespace optterm {

namespace {

Vec2 closest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

Vec2 closest_on_boundary(const std::vector<Vec2>& poly, const Vec2& p) {
  Vec2 best = poly.front();
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 c = closest_on_segment(p, poly[i], poly[(i + 1) % poly.size()]);
    const double d2 = (c - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = c;
    }
  }
  return best;
}

bool inside(const std::vector<Vec2>& poly, const Vec2& p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      in = !in;
    }
  }
  return in;
}

bool overlaps(const std::vector<Vec2>& poly, const Vec2& p, double radius) {
  return inside(poly, p) || (closest_on_boundary(poly, p) - p).norm() < radius;
}

Vec2 read_point(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("points must be [x, y] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json write_point(const Vec2& p) { return nlohmann::json::array({p.x(), p.y()}); }

}  // namespace

void PinballConfig::validate() const {
  const PinballPhysics& ph = physics;
  if (!(ph.drag > 0.0 && ph.drag <= 1.0)) throw ConfigError("drag must lie in (0,1]");
  if (!(ph.restitution >= 0.0 && ph.restitution <= 1.0)) throw ConfigError("restitution must lie in [0,1]");
  if (!(ph.impulse > 0.0) || ph.substeps < 1 || !(ph.dt > 0.0)) {
    throw ConfigError("impulse, substeps and dt must be positive");
  }
  if (!(ph.ball_radius > 0.0 && ph.ball_radius < 0.5)) throw ConfigError("ball radius must lie in (0,0.5)");
  if (!(termination_distance > 0.0 && termination_distance < initiation_distance)) {
    throw ConfigError("termination distance must be positive and below the initiation distance");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
  if (!(goal_radius > 0.0)) throw ConfigError("goal radius must be positive");
  if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be positive");
  if (landmarks.empty()) throw ConfigError("pinball needs at least one landmark");
  for (const auto& poly : obstacles) {
    if (poly.size() < 3) throw ConfigError("obstacle polygons need at least three vertices");
  }
  if (pinball_collides(*this, start)) throw ConfigError("start position overlaps an obstacle or wall");
  if (pinball_collides(*this, goal)) throw ConfigError("goal position overlaps an obstacle or wall");
  for (const Vec2& l : landmarks) {
    if (l.x() < 0.0 || l.x() > 1.0 || l.y() < 0.0 || l.y() > 1.0) throw ConfigError("landmarks must lie on the board");
  }
}

PinballConfig pinball_config_from_json(const nlohmann::json& j) {
  PinballConfig cfg;
  for (const auto& poly : j.value("obstacles", nlohmann::json::array())) {
    std::vector<Vec2> pts;
    for (const auto& p : poly) pts.push_back(read_point(p));
    cfg.obstacles.push_back(std::move(pts));
  }
  for (const auto& p : j.at("landmarks")) cfg.landmarks.push_back(read_point(p));
  cfg.goal = read_point(j.at("goal"));
  cfg.start = read_point(j.at("start"));
  cfg.goal_radius = j.value("goal_radius", cfg.goal_radius);
  if (j.contains("physics")) {
    const auto& ph = j["physics"];
    cfg.physics.drag = ph.value("drag", cfg.physics.drag);
    cfg.physics.restitution = ph.value("restitution", cfg.physics.restitution);
    cfg.physics.impulse = ph.value("impulse", cfg.physics.impulse);
    cfg.physics.substeps = ph.value("substeps", cfg.physics.substeps);
    cfg.physics.ball_radius = ph.value("ball_radius", cfg.physics.ball_radius);
    cfg.physics.dt = ph.value("dt", cfg.physics.dt);
  }
  cfg.r_step = j.value("r_step", cfg.r_step);
  cfg.r_final = j.value("r_final", cfg.r_final);
  cfg.initiation_distance = j.value("initiation_distance", cfg.initiation_distance);
  cfg.termination_distance = j.value("termination_distance", cfg.termination_distance);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.max_episode_steps = j.value("max_episode_steps", cfg.max_episode_steps);
  cfg.validate();
  return cfg;
}

nlohmann::json pinball_config_to_json(const PinballConfig& cfg) {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& poly : cfg.obstacles) {
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec2& p : poly) pts.push_back(write_point(p));
    obstacles.push_back(std::move(pts));
  }
  nlohmann::json landmarks = nlohmann::json::array();
  for (const Vec2& p : cfg.landmarks) landmarks.push_back(write_point(p));
  return {{"obstacles", obstacles},
          {"landmarks", landmarks},
          {"goal", write_point(cfg.goal)},
          {"goal_radius", cfg.goal_radius},
          {"start", write_point(cfg.start)},
          {"physics",
           {{"drag", cfg.physics.drag},
            {"restitution", cfg.physics.restitution},
            {"impulse", cfg.physics.impulse},
            {"substeps", cfg.physics.substeps},
            {"ball_radius", cfg.physics.ball_radius},
            {"dt", cfg.physics.dt}}},
          {"r_step", cfg.r_step},
          {"r_final", cfg.r_final},
          {"initiation_distance", cfg.initiation_distance},
          {"termination_distance", cfg.termination_distance},
          {"gamma", cfg.gamma},
          {"max_episode_steps", cfg.max_episode_steps}};
}

PinballConfig load_pinball_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open pinball config {}", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return pinball_config_from_json(j);
}

PinballState pinball_start(const PinballConfig& cfg) { return {cfg.start.x(), cfg.start.y(), 0.0, 0.0}; }

bool pinball_collides(const PinballConfig& cfg, const Vec2& p) {
  const double r = cfg.physics.ball_radius;
  if (p.x() < r || p.x() > 1.0 - r || p.y() < r || p.y() > 1.0 - r) return true;
  return std::any_of(cfg.obstacles.begin(), cfg.obstacles.end(),
                     [&](const auto& poly) { return overlaps(poly, p, r); });
}

double kinetic_energy(const PinballState& s) { return 0.5 * (s.xdot * s.xdot + s.ydot * s.ydot); }

PinballStep pinball_step(const PinballConfig& cfg, const PinballState& state, int action) {
  if (action < 0 || action >= kPinballActions) throw ConfigError(fmt::format("pinball action {} out of range", action));
  const PinballPhysics& ph = cfg.physics;
  const double r = ph.ball_radius;
  Vec2 v = state.velocity();
  switch (action) {
    case kPushRight: v.x() += ph.impulse; break;
    case kPushUp: v.y() += ph.impulse; break;
    case kPushLeft: v.x() -= ph.impulse; break;
    case kPushDown: v.y() -= ph.impulse; break;
    default: break;
  }
  v = v.cwiseMax(-1.0).cwiseMin(1.0);
  Vec2 p = state.position();
  const double h = ph.dt / ph.substeps;
  bool done = false;
  for (int i = 0; i < ph.substeps && !done; ++i) {
    const Vec2 q = p + h * v;
    bool bounced = false;
    if (q.x() < r || q.x() > 1.0 - r) {
      v.x() = q.x() < r ? std::abs(v.x()) : -std::abs(v.x());
      bounced = true;
    }
    if (q.y() < r || q.y() > 1.0 - r) {
      v.y() = q.y() < r ? std::abs(v.y()) : -std::abs(v.y());
      bounced = true;
    }
    if (!bounced) {
      for (const auto& poly : cfg.obstacles) {
        if (!overlaps(poly, q, r)) continue;
        const Vec2 away = p - closest_on_boundary(poly, p);
        const double len = away.norm();
        const double vn = len > 0.0 ? v.dot(away) / len : 0.0;
        if (len > 0.0 && vn < 0.0) {
          v -= 2.0 * vn * away / len;
        } else {
          v = -v;
        }
        bounced = true;
        break;
      }
    }
    if (bounced) {
      v *= ph.restitution;
      continue;
    }
    p = q;
    done = (p - cfg.goal).norm() <= cfg.goal_radius;
  }
  // Oblique obstacle bounces can rotate speed onto one axis, so clamp again.
  v = (v * ph.drag).cwiseMax(-1.0).cwiseMin(1.0);
  return {{p.x(), p.y(), v.x(), v.y()}, done ? cfg.r_final : cfg.r_step, done};
}

std::vector<LandmarkOption> landmark_options(const PinballConfig& cfg) {
  std::vector<LandmarkOption> out;
  for (std::size_t i = 0; i < cfg.landmarks.size(); ++i) {
    out.push_back({static_cast<int>(i), cfg.landmarks[i], cfg.initiation_distance, cfg.termination_distance});
  }
  return out;
}

int landmark_option_policy(const PinballConfig& cfg, const LandmarkOption& option, const PinballState& s) {
  const PinballPhysics& ph = cfg.physics;
  constexpr double kStep[kPinballActions][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {0, 0}};
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < kPinballActions; ++a) {
    Vec2 v = s.velocity() + ph.impulse * Vec2(kStep[a][0], kStep[a][1]);
    v = v.cwiseMax(-1.0).cwiseMin(1.0);
    const double d = (s.position() + ph.dt * v - option.landmark).norm();
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  return best;
}

}  // namespace optterm
