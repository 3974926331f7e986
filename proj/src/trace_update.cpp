#include "optterm/trace_update.hpp"

#include "optterm/errors.hpp"

namespace optterm {

namespace {

void check_lengths(std::span<const double> rewards, std::span<const TraceStep> steps) {
  if (rewards.empty() || steps.size() != rewards.size() + 1) {
    throw ConfigError("a segment needs D >= 1 rewards and D + 1 states");
  }
}

}  // namespace

std::vector<double> qbeta_deltas(std::span<const double> rewards, std::span<const TraceStep> steps, double gamma) {
  check_lengths(rewards, steps);
  const std::size_t d = rewards.size();
  std::vector<double> out(d);
  double carry = 0.0;
  for (std::size_t t = d; t-- > 0;) {
    const TraceStep& next = steps[t + 1];
    const double target = (1.0 - next.beta) * next.q_option + next.beta * next.expected_mu;
    const double delta = rewards[t] + gamma * target - steps[t].q_option;
    if (t + 1 < d) {
      const double c = 1.0 - next.beta + next.beta * next.mu_option;
      carry = delta + gamma * c * carry;
    } else {
      carry = delta;
    }
    out[t] = carry;
  }
  return out;
}

std::vector<double> tree_backup_deltas(std::span<const double> rewards, std::span<const TraceStep> steps,
                                       double gamma) {
  check_lengths(rewards, steps);
  const std::size_t d = rewards.size();
  std::vector<double> out(d);
  double carry = 0.0;
  for (std::size_t t = d; t-- > 0;) {
    const TraceStep& next = steps[t + 1];
    const double delta = rewards[t] + gamma * next.expected_mu - steps[t].q_option;
    if (t + 1 < d) {
      carry = delta + gamma * next.mu_option * carry;
    } else {
      carry = delta;
    }
    out[t] = carry;
  }
  return out;
}

std::vector<double> plain_deltas(std::span<const double> rewards, std::span<const TraceStep> steps, double bootstrap,
                                 double gamma) {
  check_lengths(rewards, steps);
  const std::size_t d = rewards.size();
  std::vector<double> out(d);
  double ret = bootstrap;
  for (std::size_t t = d; t-- > 0;) {
    ret = rewards[t] + gamma * ret;
    out[t] = ret - steps[t].q_option;
  }
  return out;
}

}  // namespace optterm
