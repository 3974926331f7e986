#include <doctest.h>

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "optterm/env/chain.hpp"
#include "optterm/env/cliffwalk.hpp"
#include "optterm/env/pinball.hpp"
#include "optterm/env/tile_coder.hpp"
#include "optterm/errors.hpp"
#include "optterm/exact_solver.hpp"
#include "optterm/pinball_learner.hpp"
#include "support/instances.hpp"

using namespace optterm;
using namespace optterm::testing;

namespace {

PinballConfig open_board() {
  PinballConfig cfg;
  cfg.landmarks = {{0.5, 0.5}};
  return cfg;
}

PinballConfig shipped_board() { return load_pinball_config(std::string(OPTTERM_CONFIG_DIR) + "/pinball.json"); }

PinballState random_free_state(const PinballConfig& cfg, TestRng& rng, double max_speed) {
  while (true) {
    PinballState s{uniform(rng), uniform(rng), uniform(rng, -max_speed, max_speed), uniform(rng, -max_speed, max_speed)};
    if (!pinball_collides(cfg, s.position())) return s;
  }
}

}  // namespace

TEST_CASE("chain") {
  const TabularTask task = build_chain19();
  const OptionSet& opts = task.options;
  const TabularMDP& mdp = opts.mdp();
  CHECK_NOTHROW(mdp.validate());
  CHECK(mdp.n_states == 21);
  CHECK(task.start == 10);
  CHECK(mdp.terminal.front());
  CHECK(mdp.terminal.back());
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) CHECK(mdp.p.row(mdp.row(s, a)).maxCoeff() == 1.0);
  }

  SUBCASE("left option from the leftmost interior state takes one step") {
    Rng rng(1);
    const auto seg = run_option(build_chain19(0.0, 0.0).options, kChainLeftOption, 1, 0.0, 100, rng);
    CHECK(seg.duration() == 1);
    CHECK(seg.states.back() == 0);
  }
  SUBCASE("beta = 1 with uniform mu evaluates the unbiased walk") {
    const auto mu = PolicyOverOptions::uniform(opts);
    const StateOptionQ q = fixed_point_beta(opts, mu);
    const ActionQ walk = policy_eval_solve(mdp, marginal_policy(opts, mu));
    const double v_walk = 0.5 * (walk.values(10, 0) + walk.values(10, 1));
    CHECK(expected_q_under_mu(q, mu, 10) == doctest::Approx(v_walk).epsilon(1e-12));
  }
  SUBCASE("right option next to the right end, beta = 0") {
    const OptionSet o0 = build_chain19(0.0, 0.0).options;
    const StateOptionQ q = fixed_point_beta(o0, PolicyOverOptions::uniform(o0));
    // The reward arrives on the single step into the terminal.
    CHECK(q.values(19, kChainRightOption) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.values(1, kChainRightOption) == doctest::Approx(std::pow(0.99, 18)).epsilon(1e-12));
  }
}

TEST_CASE("cliffwalk") {
  const Cliffwalk cw = build_cliffwalk({});
  const OptionSet& opts = cw.task.options;
  const TabularMDP& mdp = opts.mdp();
  CHECK_NOTHROW(mdp.validate());
  CHECK(cw.task.start == cw.cell(5, 5));
  CHECK(cw.goal == cw.cell(0, 9));
  CHECK(mdp.terminal[static_cast<std::size_t>(cw.goal)]);
  CHECK_FALSE(cw.cliff[static_cast<std::size_t>(cw.cell(0, 8))]);
  CHECK_FALSE(cw.cliff[static_cast<std::size_t>(cw.cell(1, 9))]);
  CHECK(cw.cliff[static_cast<std::size_t>(cw.cell(0, 7))]);
  CHECK(cw.cliff[static_cast<std::size_t>(cw.cell(9, 0))]);
  CHECK_FALSE(cw.cliff[static_cast<std::size_t>(cw.cell(4, 4))]);
  CHECK(mdp.r(cw.cell(1, 7), kNorth) == -2.0);
  CHECK(mdp.r(cw.cell(1, 9), kNorth) == 10.0);
  CHECK(mdp.r(cw.cell(5, 5), kNorth) == 0.0);
  CHECK_THROWS_AS(build_cliffwalk({.n = 2}), ConfigError);

  SUBCASE("directional options stop at their border when zeta = 0") {
    Rng rng(3);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.terminal[static_cast<std::size_t>(s)]) continue;
      for (int o = 0; o < 4; ++o) {
        const auto seg = run_option(opts, o, s, 0.0, 100, rng);
        const int last = seg.states.back();
        if (last == cw.goal) continue;
        const int row = cw.row_of(last);
        const int col = cw.col_of(last);
        CHECK(seg.duration() >= 1);
        if (o == kNorth) CHECK(row == 0);
        if (o == kEast) CHECK(col == cw.n - 1);
        if (o == kSouth) CHECK(row == cw.n - 1);
        if (o == kWest) CHECK(col == 0);
      }
    }
  }
  SUBCASE("optimal primitive return and the options-only plateau") {
    const auto vi = value_iteration(mdp);
    const double v_star = vi.q.values.row(cw.task.start).maxCoeff();
    // Nine moves, the last into the goal, none through a cliff.
    CHECK(v_star == doctest::Approx(10.0 * std::pow(0.99, 8)).epsilon(1e-10));
    const OptionSet rigid = opts.with_beta(0.0);
    const ControlResult res = control_iteration(rigid, pessimistic_init(rigid));
    const double v_options = res.q.values.row(cw.task.start).maxCoeff();
    CHECK(v_options < v_star - 1e-6);
  }
}

TEST_CASE("pinball physics") {
  const PinballConfig cfg = open_board();

  SUBCASE("no-op at rest stays put") {
    const PinballState s{0.3, 0.4, 0.0, 0.0};
    const PinballStep step = pinball_step(cfg, s, kNoForce);
    CHECK(step.next == s);
    CHECK(step.reward == -1.0);
    CHECK_FALSE(step.done);
  }
  SUBCASE("head-on wall hit flips the velocity") {
    const PinballStep step = pinball_step(cfg, {0.97, 0.5, 0.8, 0.0}, kNoForce);
    CHECK(step.next.xdot < 0.0);
    CHECK(step.next.ydot == 0.0);
    const PinballStep down = pinball_step(cfg, {0.5, 0.03, 0.0, -0.8}, kNoForce);
    CHECK(down.next.ydot > 0.0);
  }
  SUBCASE("obstacle hit reflects") {
    PinballConfig boxed = cfg;
    boxed.obstacles = {{{0.6, 0.4}, {0.7, 0.4}, {0.7, 0.6}, {0.6, 0.6}}};
    const PinballStep step = pinball_step(boxed, {0.56, 0.5, 1.0, 0.0}, kNoForce);
    CHECK(step.next.xdot < 0.0);
    CHECK_FALSE(pinball_collides(boxed, step.next.position()));
  }
  SUBCASE("impulse and goal reward") {
    const PinballStep step = pinball_step(cfg, {0.3, 0.3, 0.0, 0.0}, kPushUp);
    CHECK(step.next.ydot == doctest::Approx(0.2 * 0.995));
    CHECK(step.next.y > 0.3);
    const PinballStep in = pinball_step(cfg, {cfg.goal.x() - 0.05, cfg.goal.y(), 1.0, 0.0}, kNoForce);
    CHECK(in.done);
    CHECK(in.reward == 10'000.0);
  }
  SUBCASE("energy never grows without force, state stays in bounds") {
    const PinballConfig board = shipped_board();
    TestRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      PinballState s = random_free_state(board, rng, 1.0);
      for (int t = 0; t < 100; ++t) {
        const PinballStep step = pinball_step(board, s, kNoForce);
        CHECK(kinetic_energy(step.next) <= kinetic_energy(s) + 1e-15);
        s = step.next;
        if (step.done) break;
      }
    }
    for (int trial = 0; trial < 50; ++trial) {
      PinballState s = random_free_state(board, rng, 1.0);
      for (int t = 0; t < 200; ++t) {
        const PinballStep step = pinball_step(board, s, static_cast<int>(rng() % kPinballActions));
        s = step.next;
        REQUIRE_FALSE(pinball_collides(board, s.position()));
        REQUIRE(std::abs(s.xdot) <= 1.0);
        REQUIRE(std::abs(s.ydot) <= 1.0);
        if (step.done) break;
      }
    }
  }
  CHECK_THROWS_AS(pinball_step(cfg, {0.5, 0.5, 0, 0}, 5), ConfigError);
}

TEST_CASE("pinball config") {
  const PinballConfig board = shipped_board();
  CHECK_NOTHROW(board.validate());
  const PinballConfig again = pinball_config_from_json(pinball_config_to_json(board));
  CHECK(pinball_config_to_json(again) == pinball_config_to_json(board));

  SUBCASE("every free position can start some option") {
    const auto opts = landmark_options(board);
    for (double x = 0.0; x <= 1.0; x += 0.01) {
      for (double y = 0.0; y <= 1.0; y += 0.01) {
        if (pinball_collides(board, {x, y})) continue;
        const PinballState s{x, y, 0, 0};
        bool any = false;
        for (const auto& o : opts) any = any || o.can_initiate(s);
        CHECK(any);
      }
    }
  }
  SUBCASE("invalid boards") {
    nlohmann::json j = pinball_config_to_json(board);
    j["start"] = {0.5, 0.5};
    CHECK_THROWS_AS(pinball_config_from_json(j), ConfigError);
    j = pinball_config_to_json(board);
    j["termination_distance"] = 0.5;
    CHECK_THROWS_AS(pinball_config_from_json(j), ConfigError);
    j = pinball_config_to_json(board);
    j["landmarks"] = nlohmann::json::array();
    CHECK_THROWS_AS(pinball_config_from_json(j), ConfigError);
    CHECK_THROWS_AS(load_pinball_config("/nonexistent/board.json"), ConfigError);
  }
}

TEST_CASE("landmark controller") {
  PinballConfig cfg = open_board();
  const LandmarkOption opt = landmark_options(cfg).front();
  CHECK(landmark_option_policy(cfg, opt, {0.3, 0.5, 0, 0}) == kPushRight);
  CHECK(landmark_option_policy(cfg, opt, {0.5, 0.8, 0, 0}) == kPushDown);
  CHECK(opt.reached({0.52, 0.5, 0, 0}));
  CHECK_FALSE(opt.reached({0.6, 0.5, 0, 0}));

  SUBCASE("reaches its landmark from nearby starts") {
    TestRng rng(7);
    // Hole tucked into a corner so it never ends a trial.
    cfg.goal_radius = 1e-6;
    cfg.goal = {0.03, 0.03};
    int reached = 0;
    const int trials = 300;
    for (int trial = 0; trial < trials; ++trial) {
      cfg.landmarks = {{uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)}};
      const LandmarkOption o = landmark_options(cfg).front();
      PinballState s;
      do {
        s = {uniform(rng), uniform(rng), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)};
      } while (pinball_collides(cfg, s.position()) || !o.can_initiate(s));
      for (int t = 0; t < 500 && !o.reached(s); ++t) s = pinball_step(cfg, s, landmark_option_policy(cfg, o, s)).next;
      if (o.reached(s)) ++reached;
    }
    CHECK(reached >= 0.95 * trials);
  }
}

TEST_CASE("tile coder") {
  TileCoder coder;
  CHECK(coder.n_tilings() == 16);
  CHECK(coder.n_features() == 1600);
  TestRng rng(9);

  SUBCASE("one index per tiling, deterministic") {
    for (int i = 0; i < 500; ++i) {
      const PinballState s{uniform(rng), uniform(rng), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      const auto f = coder.features(s);
      REQUIRE(f.size() == 16);
      for (int k = 0; k < 16; ++k) {
        CHECK(f[static_cast<std::size_t>(k)] >= k * 100);
        CHECK(f[static_cast<std::size_t>(k)] < (k + 1) * 100);
      }
      CHECK(coder.features(s) == f);
    }
    CHECK(coder.clamped_count() == 0);
  }
  SUBCASE("offsets differ across tilings") {
    // Nearby states split differently in different tilings.
    int differing = 0;
    for (int i = 0; i < 200; ++i) {
      const PinballState a{uniform(rng), uniform(rng), 0, 0};
      const PinballState b{a.x + 0.03, a.y, 0, 0};
      const auto fa = coder.features(a);
      const auto fb = coder.features(b);
      int changed = 0;
      for (int k = 0; k < 12; ++k) changed += fa[static_cast<std::size_t>(k)] != fb[static_cast<std::size_t>(k)];
      if (changed > 0 && changed < 12) ++differing;
    }
    CHECK(differing > 100);
  }
  SUBCASE("update moves the value at the state by alpha * delta") {
    TileWeights w(coder, 3);
    for (int i = 0; i < 50; ++i) {
      const PinballState s{uniform(rng), uniform(rng), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      const int o = i % 3;
      const double before = q_value(w, coder, s, o);
      const double d = uniform(rng, -5, 5);
      apply_update(w, coder, s, o, d, 0.1);
      CHECK(q_value(w, coder, s, o) - before == doctest::Approx(0.1 * d).epsilon(1e-12));
    }
    TileWeights fresh(coder, 2);
    const auto f = coder.features({0.2, 0.2, 0, 0});
    apply_update(fresh, f, 1, 16.0, 1.0);
    CHECK(fresh.w.col(0).isZero());
    CHECK((fresh.w.col(1).array() != 0.0).count() == 16);
  }
  SUBCASE("out-of-range states are clamped and counted") {
    const auto inside = coder.features({1.0, 0.0, 1.0, -1.0});
    CHECK(coder.clamped_count() == 0);
    const auto outside = coder.features({1.3, -0.2, 2.0, -1.5});
    CHECK(coder.clamped_count() == 4 * 16 / 2);
    CHECK(outside == inside);
  }
  CHECK_THROWS_AS(TileCoder({0, 0, 10}), ConfigError);
}

TEST_CASE("pinball agent") {
  const PinballConfig board = shipped_board();
  PinballAgent agent(board);
  CHECK(agent.n_options() == static_cast<int>(board.landmarks.size()));
  const PinballState start = pinball_start(board);
  for (int o : agent.initiable(start)) CHECK(agent.options()[static_cast<std::size_t>(o)].can_initiate(start));
  CHECK(agent.greedy(start) == agent.initiable(start).front());

  SUBCASE("segments end where they should") {
    Rng rng(11);
    const int first = agent.initiable(start).back();
    const PinballSegment seg = agent.run_option(first, start, 0.0, 0.0, 500, rng);
    CHECK(seg.end == SegmentEnd::goal_state);
    CHECK(agent.options()[static_cast<std::size_t>(first)].reached(seg.states.back()));
    const PinballSegment one = agent.run_option(first, start, 1.0, 0.0, 500, rng);
    CHECK(one.duration() == 1);
    CHECK(one.end == SegmentEnd::zeta_sample);
    const PinballSegment capped = agent.run_option(first, start, 0.0, 0.0, 3, rng);
    CHECK(capped.duration() == 3);
    CHECK(capped.end == SegmentEnd::step_limit);
  }
  SUBCASE("hole reads as zero") {
    Rng rng(13);
    // The option aimed at the hole falls in before reaching its landmark.
    int last = 0;
    for (const auto& o : agent.options()) {
      if ((o.landmark - board.goal).norm() < 1e-12) last = o.id;
    }
    const PinballState near{board.goal.x() - 0.1, board.goal.y(), 0, 0};
    const PinballSegment seg = agent.run_option(last, near, 0.0, 0.0, 500, rng);
    REQUIRE(seg.end == SegmentEnd::episode_end);
    const auto steps = agent.trace_steps(seg, 0.5);
    CHECK(steps.size() == seg.states.size());
    CHECK(steps.back().q_option == 0.0);
    CHECK(steps.back().expected_mu == 0.0);
    CHECK(steps.back().beta == 1.0);
  }
  SUBCASE("Q(beta) at beta = 1 equals Tree-Backup") {
    Rng rng(17);
    PinballAgent a(board);
    a.weights().w = Matrix::Random(a.weights().w.rows(), a.weights().w.cols()) * 100.0;
    PinballAgent b = a;
    const PinballSegment seg = a.run_option(0, start, 0.1, 0.2, 50, rng);
    const auto da = a.learn(Algorithm::qbeta, seg, 1.0, 0.1, 0.05);
    const auto db = b.learn(Algorithm::tree_backup, seg, 1.0, 0.1, 0.05);
    REQUIRE(da.size() == db.size());
    CHECK(std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0);
    CHECK(a.weights().w == b.weights().w);
  }
  SUBCASE("short control run") {
    LearnerConfig lc;
    lc.alpha = 0.01;
    lc.epsilon = 0.05;
    lc.epsilon_opt = 0.01;
    lc.beta = 0.5;
    lc.zeta = 0.0;
    lc.episodes = 20;
    lc.eval_interval = 10;
    lc.seed = 4;
    const RunResult r1 = run_pinball_control(board, lc);
    const RunResult r2 = run_pinball_control(board, lc);
    REQUIRE(r1.rows.size() == r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
      CHECK(r1.rows[i].metric == r2.rows[i].metric);
      CHECK(r1.rows[i].value == r2.rows[i].value);
    }
    for (const auto& row : r1.rows) {
      if (row.metric == "tile_violations") CHECK(row.value == 0.0);
      if (row.metric == "eval_steps") CHECK(row.value <= board.max_episode_steps);
    }
  }
}
