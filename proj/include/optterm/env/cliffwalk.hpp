#pragma once

#include "optterm/learners.hpp"

namespace optterm {

/// Grid actions and the matching directional options share these ids.
enum Direction : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

/// n x n grid. Border cells are cliffs (entering one costs r_cliff, the
/// episode continues) except the goal corner and its two border neighbours,
/// which keep a cliff-free approach to the goal open.
struct CliffwalkConfig {
  int n = 10;
  double r_goal = 10.0;
  double r_cliff = -2.0;
  double r_step = 0.0;
  double gamma = 0.99;
  /// Negative means the grid centre (n / 2).
  int start_row = -1;
  int start_col = -1;
  /// Goal corner; defaults to the north-east corner.
  int goal_row = 0;
  int goal_col = -1;
  double zeta = 0.0;
  double beta = 1.0;
};

struct Cliffwalk {
  TabularTask task;
  int n = 0;
  int goal = 0;
  std::vector<bool> cliff;

  int cell(int row, int col) const { return row * n + col; }
  int row_of(int s) const { return s / n; }
  int col_of(int s) const { return s % n; }
};

/// Grid MDP plus four options that each walk in one direction until the
/// corresponding border.
Cliffwalk build_cliffwalk(const CliffwalkConfig& cfg);

}  // namespace optterm
