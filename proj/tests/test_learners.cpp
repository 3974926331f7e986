#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "optterm/env/chain.hpp"
#include "optterm/exact_solver.hpp"
#include "optterm/learners.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace optterm;
using namespace optterm::testing;

namespace {

std::vector<TraceStep> random_steps(TestRng& rng, int n) {
  std::vector<TraceStep> steps(static_cast<std::size_t>(n));
  for (auto& st : steps) st = {uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng), uniform(rng)};
  return steps;
}

}  // namespace

TEST_CASE("trace core special cases") {
  TestRng rng(31);
  const std::vector<double> rewards{0.5, -1.0, 2.0};
  auto steps = random_steps(rng, 4);

  SUBCASE("gamma = 0 regresses on the immediate reward") {
    const auto d = qbeta_deltas(rewards, steps, 0.0);
    for (std::size_t t = 0; t < 3; ++t) CHECK(d[t] == rewards[t] - steps[t].q_option);
  }
  SUBCASE("beta = 0 telescopes to the discounted return toward the current option") {
    for (auto& st : steps) st.beta = 0.0;
    const double g = 0.9;
    const auto d = qbeta_deltas(rewards, steps, g);
    const double ret = 0.5 + g * (-1.0) + g * g * 2.0 + g * g * g * steps[3].q_option;
    CHECK(d[0] == doctest::Approx(ret - steps[0].q_option).epsilon(1e-14));
    const auto plain = plain_deltas(rewards, steps, steps[3].q_option, g);
    for (std::size_t t = 0; t < 3; ++t) CHECK(d[t] == doctest::Approx(plain[t]).epsilon(1e-13));
  }
  SUBCASE("beta = 1 is bit-identical to Tree-Backup") {
    for (int trial = 0; trial < 100; ++trial) {
      auto s = random_steps(rng, 6);
      for (auto& st : s) st.beta = 1.0;
      const std::vector<double> r{uniform(rng), uniform(rng), uniform(rng), uniform(rng), uniform(rng)};
      const auto a = qbeta_deltas(r, s, 0.97);
      const auto b = tree_backup_deltas(r, s, 0.97);
      CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }
  }
  SUBCASE("one-step plain update") {
    const std::vector<double> r{1.5};
    const auto d = plain_deltas(r, std::span(steps).first(2), 4.0, 0.9);
    CHECK(d[0] == doctest::Approx(1.5 + 0.9 * 4.0 - steps[0].q_option));
  }
  SUBCASE("Tree-Backup with mu on the current option keeps the full trace") {
    for (auto& st : steps) st.mu_option = 1.0;
    for (auto& st : steps) st.beta = 0.0;
    const auto tb = tree_backup_deltas(rewards, steps, 0.9);
    // delta_t + gamma Delta_{t+1} chain.
    double carry = rewards[2] + 0.9 * steps[3].expected_mu - steps[2].q_option;
    CHECK(tb[2] == carry);
    carry = rewards[1] + 0.9 * steps[2].expected_mu - steps[1].q_option + 0.9 * carry;
    CHECK(tb[1] == doctest::Approx(carry).epsilon(1e-14));
  }
  CHECK_THROWS_AS(qbeta_deltas(rewards, std::span(steps).first(3), 0.9), ConfigError);
  CHECK_THROWS_AS(qbeta_deltas({}, std::span(steps).first(1), 0.9), ConfigError);
}

TEST_CASE("segment sampling") {
  Rng rng(32);
  SUBCASE("zeta = 1 gives unit durations") {
    const TabularTask task = build_chain19(1.0, 1.0);
    const PolicyOverOptions mu = PolicyOverOptions::uniform(task.options);
    for (int i = 0; i < 200; ++i) CHECK(sample_option_segment(task.options, mu, 10, 0.0, 1000, rng).duration() == 1);
  }
  SUBCASE("zeta = 0 runs to the goal") {
    const TabularTask task = build_chain19(0.0, 1.0);
    const OptionSegment seg = run_option(task.options, kChainRightOption, 13, 0.0, 1000, rng);
    CHECK(seg.duration() == 7);
    CHECK(seg.end == SegmentEnd::episode_end);
    CHECK(seg.consistent());
    CHECK(run_option(task.options, kChainLeftOption, 1, 0.0, 1000, rng).duration() == 1);
  }
  SUBCASE("zeta = 0.5 durations follow the truncated geometric law") {
    const TabularTask task = build_chain19(0.5, 1.0);
    constexpr int kSamples = 100'000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const double d = run_option(task.options, kChainRightOption, 10, 0.0, 1000, rng).duration();
      sum += d;
      sum_sq += d * d;
    }
    // P(D > k) = 0.5^k for k < 10, distance 10 to the right terminal.
    double expected = 0.0;
    for (int k = 0; k < 10; ++k) expected += std::pow(0.5, k);
    const double mean = sum / kSamples;
    const double se = std::sqrt((sum_sq / kSamples - mean * mean) / kSamples);
    CHECK(std::abs(mean - expected) < 3.0 * se);
  }
  SUBCASE("step budget cuts a segment") {
    const TabularTask task = build_chain19(0.0, 1.0);
    const OptionSegment seg = run_option(task.options, kChainRightOption, 10, 0.0, 3, rng);
    CHECK(seg.duration() == 3);
    CHECK(seg.end == SegmentEnd::step_limit);
  }
}

TEST_CASE("expected sampled updates equal the matrix operators") {
  TestRng rng(33);
  for (int trial = 0; trial < 3; ++trial) {
    const OptionSet opts = slippery_chain(rng, 0.6, 0.4);
    const PolicyOverOptions mu = random_mu(opts, rng);
    StateOptionQ q = random_q(5, 2, rng, 2.0);
    q.values.row(0).setZero();
    q.values.row(4).setZero();
    const Matrix terminal_rows = [&] {
      Matrix m = Matrix::Ones(5, 2);
      m.row(0).setZero();
      m.row(4).setZero();
      return m;
    }();
    constexpr double kPrune = 1e-12;

    double dropped = 0.0;
    const Matrix qbeta = enumerate_expected_delta(
        opts, q, [&](const StateOptionQ& v, const OptionSegment& seg) { return qbeta_segment_deltas(v, seg, opts, mu); },
        kPrune, &dropped);
    const Matrix qbeta_op = (expected_qbeta_op(opts, mu, q).values - q.values).cwiseProduct(terminal_rows);
    CHECK(sup_norm(qbeta - qbeta_op) < 1e-6);
    CHECK(dropped < 1e-6);

    const Matrix plain = enumerate_expected_delta(
        opts, q, [&](const StateOptionQ& v, const OptionSegment& seg) { return plain_segment_deltas(v, seg, opts, mu); },
        kPrune);
    const Matrix plain_op =
        (option_bellman_op(opts, mu, q, Termination::zeta).values - q.values).cwiseProduct(terminal_rows);
    CHECK(sup_norm(plain - plain_op) < 1e-6);

    const Matrix tb = enumerate_expected_delta(
        opts, q,
        [&](const StateOptionQ& v, const OptionSegment& seg) { return tree_backup_segment_deltas(v, seg, opts, mu); },
        kPrune);
    const Matrix tb_op = (expected_qbeta_op(opts.with_beta(1.0), mu, q).values - q.values).cwiseProduct(terminal_rows);
    CHECK(sup_norm(tb - tb_op) < 1e-6);
  }
}

TEST_CASE("forward updates apply batch corrections") {
  TestRng trng(34);
  const OptionSet opts = slippery_chain(trng, 0.9);
  const PolicyOverOptions mu = random_mu(opts, trng);
  const StateOptionQ q = random_q(5, 2, trng);
  Rng rng(35);
  for (int i = 0; i < 50; ++i) {
    const OptionSegment seg = sample_option_segment(opts, mu, 2, 0.0, 100, rng);
    const auto deltas = qbeta_segment_deltas(q, seg, opts, mu);
    const StateOptionQ updated = qbeta_forward_update(q, seg, opts, mu, 0.1);
    Matrix expected = q.values;
    for (std::size_t t = 0; t < deltas.size(); ++t) expected(seg.states[t], seg.option) += 0.1 * deltas[t];
    CHECK(sup_norm(updated.values - expected) == 0.0);

    const StateOptionQ tb = tree_backup_update(q, seg, opts.with_beta(1.0), mu, 0.1);
    const StateOptionQ qb = qbeta_forward_update(q, seg, opts.with_beta(1.0), mu, 0.1);
    CHECK(std::memcmp(tb.values.data(), qb.values.data(), sizeof(double) * 10) == 0);
  }
}

TEST_CASE("GreedyMu") {
  const TabularTask task = build_chain19();
  StateOptionQ q = StateOptionQ::zeros(task.options);
  q.values(5, 1) = 1.0;
  const GreedyMu greedy(task.options, 0.0);
  const PolicyOverOptions mu = greedy.policy(q);
  CHECK(mu.probs(5, 1) == 1.0);
  CHECK(mu.probs(6, 0) == 1.0);
  Rng rng(1);
  CHECK(greedy.sample(q, 5, rng) == 1);

  const GreedyMu soft(task.options, 0.2);
  CHECK(soft.policy(q).probs(5, 1) == doctest::Approx(0.9));
  int picks = 0;
  for (int i = 0; i < 10'000; ++i) picks += soft.sample(q, 5, rng) == 0;
  CHECK(picks == doctest::Approx(1000).epsilon(0.15));
}

TEST_CASE("run_prediction") {
  const TabularTask task = build_chain19();
  const PolicyOverOptions mu = PolicyOverOptions::uniform(task.options);
  LearnerConfig cfg;
  cfg.algorithm = Algorithm::qbeta;
  cfg.alpha = 0.2;
  cfg.beta = 1.0;
  cfg.zeta = 0.0;
  cfg.episodes = 300;
  cfg.eval_interval = 50;
  cfg.seed = 7;

  const RunResult a = run_prediction(task, mu, cfg);
  const RunResult b = run_prediction(task, mu, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].episode == b.rows[i].episode);
    CHECK(a.rows[i].value == b.rows[i].value);
  }
  CHECK(a.final_value("rms_error") < a.rows.front().value);
  CHECK(std::isnan(a.final_value("missing")));

  // Checkpoints at 0, every interval, and the last episode.
  int rms_rows = 0;
  for (const auto& row : a.rows) rms_rows += row.metric == "rms_error";
  CHECK(rms_rows == 7);

  LearnerConfig bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(run_prediction(task, mu, bad), ConfigError);
  CHECK(algorithm_from_string("onpolicy-plain") == Algorithm::plain_onpolicy);
  CHECK(algorithm_from_string("offpolicy-plain") == Algorithm::plain_offpolicy);
  CHECK_THROWS_AS(algorithm_from_string("sarsa"), ConfigError);
}

TEST_CASE("greedy_rollout follows the greedy options") {
  const TabularTask task = build_chain19(0.0, 0.0);
  StateOptionQ q = StateOptionQ::zeros(task.options);
  q.values.col(kChainRightOption).setConstant(1.0);
  Rng rng(3);
  const Rollout r = greedy_rollout(task, q, 1000, rng);
  CHECK(r.reached_terminal);
  CHECK(r.steps == 10);
  CHECK(r.undiscounted == 1.0);
  CHECK(r.discounted == doctest::Approx(std::pow(0.99, 9)));
}

TEST_CASE("behavior_reachable") {
  SUBCASE("rigid options from the middle of the chain cover one half each") {
    const OptionSet opts = build_chain19(0.0, 1.0).options;
    const auto reach = behavior_reachable(opts, PolicyOverOptions::uniform(opts), 10, false);
    const int n = opts.n_states();
    for (int s = 0; s < n; ++s) {
      const bool interior = s > 0 && s < n - 1;
      CHECK(reach[static_cast<std::size_t>(kChainLeftOption * n + s)] == (interior && s <= 10));
      CHECK(reach[static_cast<std::size_t>(kChainRightOption * n + s)] == (interior && s >= 10));
    }
  }
  SUBCASE("any positive termination opens every interior pair") {
    const OptionSet opts = build_chain19(0.1, 1.0).options;
    const auto reach = behavior_reachable(opts, PolicyOverOptions::uniform(opts), 10, false);
    CHECK(std::count(reach.begin(), reach.end(), true) == 2 * 19);
  }
  SUBCASE("sampled segments stay inside the reachable set") {
    TestRng trng(41);
    for (int trial = 0; trial < 10; ++trial) {
      auto mdp = random_mdp(6, 2, 0.9, trng, 1);
      const OptionSet opts = random_option_set(mdp, 3, trng);
      const PolicyOverOptions mu = random_mu(opts, trng);
      const auto reach = behavior_reachable(opts, mu, 0, false);
      Rng rng(static_cast<std::uint64_t>(trial));
      int s = 0;
      for (int step = 0; step < 200; ++step) {
        if (opts.mdp().terminal[static_cast<std::size_t>(s)]) s = 0;
        const OptionSegment seg = sample_option_segment(opts, mu, s, 0.0, 50, rng);
        for (std::size_t t = 0; t + 1 < seg.states.size(); ++t) {
          CHECK(reach[static_cast<std::size_t>(seg.option * opts.n_states() + seg.states[t])]);
        }
        s = seg.states.back();
      }
    }
  }
}
