#include "optterm/env/cliffwalk.hpp"

#include <algorithm>
#include <cstdlib>

namespace optterm {

Cliffwalk build_cliffwalk(const CliffwalkConfig& cfg) {
  const int n = cfg.n;
  if (n < 3) throw ConfigError("cliffwalk grid needs n >= 3");
  // Geometry helpers only; the task is attached at the end.
  struct Grid {
    int n;
    int goal = 0;
    std::vector<bool> cliff;
    int cell(int row, int col) const { return row * n + col; }
    int row_of(int s) const { return s / n; }
    int col_of(int s) const { return s % n; }
  } out{n, 0, {}};
  const int goal_row = cfg.goal_row < 0 ? 0 : cfg.goal_row;
  const int goal_col = cfg.goal_col < 0 ? n - 1 : cfg.goal_col;
  if ((goal_row != 0 && goal_row != n - 1) || (goal_col != 0 && goal_col != n - 1)) {
    throw ConfigError("cliffwalk goal must be a corner");
  }
  const int start_row = cfg.start_row < 0 ? n / 2 : cfg.start_row;
  const int start_col = cfg.start_col < 0 ? n / 2 : cfg.start_col;
  if (start_row >= n || start_col >= n) throw ConfigError("cliffwalk start outside the grid");
  out.goal = out.cell(goal_row, goal_col);

  out.cliff.assign(static_cast<std::size_t>(n * n), false);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const bool border = row == 0 || col == 0 || row == n - 1 || col == n - 1;
      const int from_goal = std::abs(row - goal_row) + std::abs(col - goal_col);
      out.cliff[static_cast<std::size_t>(out.cell(row, col))] = border && from_goal > 1;
    }
  }
  const int start = out.cell(start_row, start_col);
  if (start == out.goal) throw ConfigError("cliffwalk start coincides with the goal");

  auto mdp = std::make_shared<TabularMDP>(n * n, 4, cfg.gamma);
  constexpr int kRowStep[4] = {-1, 0, 1, 0};
  constexpr int kColStep[4] = {0, 1, 0, -1};
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int s = out.cell(row, col);
      for (int a = 0; a < 4; ++a) {
        const int next_row = std::clamp(row + kRowStep[a], 0, n - 1);
        const int next_col = std::clamp(col + kColStep[a], 0, n - 1);
        const int next = out.cell(next_row, next_col);
        mdp->prob(s, a, next) = 1.0;
        if (next == out.goal) {
          mdp->r(s, a) = cfg.r_goal;
        } else if (out.cliff[static_cast<std::size_t>(next)]) {
          mdp->r(s, a) = cfg.r_cliff;
        } else {
          mdp->r(s, a) = cfg.r_step;
        }
      }
    }
  }
  mdp->make_terminal(out.goal);
  mdp->refresh_r_max();
  mdp->validate();

  std::vector<OptionDef> options;
  for (int d = kNorth; d <= kWest; ++d) {
    std::vector<int> goals;
    for (int s = 0; s < n * n; ++s) {
      const int row = out.row_of(s);
      const int col = out.col_of(s);
      const bool at_border = (d == kNorth && row == 0) || (d == kEast && col == n - 1) ||
                             (d == kSouth && row == n - 1) || (d == kWest && col == 0);
      if (at_border) goals.push_back(s);
    }
    options.push_back(make_option(*mdp, d, PrimitivePolicy::deterministic(std::vector<int>(n * n, d), 4), cfg.zeta,
                                  cfg.beta, std::move(goals)));
  }
  return Cliffwalk{TabularTask{OptionSet(std::move(mdp), std::move(options)), start}, n, out.goal,
                   std::move(out.cliff)};
}

}  // namespace optterm
