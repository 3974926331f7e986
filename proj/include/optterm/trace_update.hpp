#pragma once

#include <span>
#include <vector>

namespace optterm {

/// What a forward-view update reads from the value function at one state of
/// a segment, for the segment's option o.
struct TraceStep {
  double q_option = 0.0;     ///< q(S_t, o)
  double expected_mu = 0.0;  ///< E_mu q(S_t, .)
  double beta = 1.0;         ///< beta^o(S_t)
  double mu_option = 0.0;    ///< mu(o | S_t)
};

// All three routines take D rewards R_1..R_D and D + 1 steps S_0..S_D and
// return the D corrections Delta_0..Delta_{D-1}, all read from the same
// (pre-update) values. They share the recursion
//   Delta_{D-1} = delta_{D-1},  Delta_t = delta_t + gamma c_{t+1} Delta_{t+1}.

/// Q(beta): delta_t = R_{t+1} + gamma qtilde(S_{t+1}) - q(S_t,o) with
/// qtilde = (1 - beta) q(., o) + beta E_mu q, and c = 1 - beta + beta mu(o|.).
std::vector<double> qbeta_deltas(std::span<const double> rewards, std::span<const TraceStep> steps, double gamma);

/// Option-level Tree-Backup: delta_t = R_{t+1} + gamma E_mu q(S_{t+1}) - q(S_t,o), c = mu(o|.).
std::vector<double> tree_backup_deltas(std::span<const double> rewards, std::span<const TraceStep> steps,
                                       double gamma);

/// Plain intra-option return: Delta_t = sum_{i>=t} gamma^{i-t} R_{i+1} + gamma^{D-t} bootstrap - q(S_t,o).
std::vector<double> plain_deltas(std::span<const double> rewards, std::span<const TraceStep> steps, double bootstrap,
                                 double gamma);

}  // namespace optterm
