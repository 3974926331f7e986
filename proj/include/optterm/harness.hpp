#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "optterm/env/chain.hpp"
#include "optterm/env/cliffwalk.hpp"
#include "optterm/env/pinball.hpp"
#include "optterm/env/tile_coder.hpp"
#include "optterm/errors.hpp"
#include "optterm/learners.hpp"

namespace optterm {

/// A spec file that cannot be read or violates its schema.
class SpecError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum class TaskKind { chain19, cliffwalk, pinball };
enum class Mode { predict, control };

std::string_view to_string(TaskKind t);
TaskKind task_from_string(std::string_view name);

/// `count` seeds with `runs_per_seed` runs each. Run i of a configuration
/// point uses seed base + i, for i < count * runs_per_seed.
struct SeedPlan {
  int count = 10;
  int runs_per_seed = 1;
  std::uint64_t base = 0;

  int total() const { return count * runs_per_seed; }
};

struct ExperimentSpec {
  TaskKind task = TaskKind::chain19;
  std::vector<Algorithm> algorithms{Algorithm::qbeta};
  std::vector<double> betas{1.0};
  std::vector<double> zetas{0.0};
  std::vector<double> alphas{0.1};
  SeedPlan seeds;
  int episodes = 100;
  int eval_interval = 10;
  int eval_episodes = 1;
  int max_episode_steps = 10'000;
  double epsilon = 0.0;
  double epsilon_opt = 0.0;
  ChainConfig chain;
  CliffwalkConfig cliffwalk;
  std::optional<PinballConfig> pinball;
  TileCoderConfig tiles;
  /// Default output directory when the command line gives none.
  std::string output;

  void validate() const;
};

/// Relative pinball board paths resolve against `base_dir`.
ExperimentSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentSpec load_spec(const std::filesystem::path& path);

struct ConfigPoint {
  Algorithm algorithm = Algorithm::qbeta;
  double beta = 1.0;
  double zeta = 0.0;
  double alpha = 0.1;

  bool operator==(const ConfigPoint&) const = default;
};

/// Grid in algorithm, beta, zeta, alpha order. On-policy plain learning
/// behaves with beta, so its points collapse the zeta grid to zeta = beta.
std::vector<ConfigPoint> config_points(const ExperimentSpec& spec);

/// One learner run; throws on invalid combinations.
RunResult run_single(const ExperimentSpec& spec, Mode mode, const ConfigPoint& point, std::uint64_t seed);

struct RunRecord {
  ConfigPoint point;
  int run_index = 0;
  std::uint64_t seed = 0;
  std::optional<RunResult> result;
  std::string error;
};

struct SweepResult {
  std::vector<RunRecord> runs;  // point-major, then run index

  int failures() const;
};

/// Runs every point and seed on up to `workers` threads. Failed runs keep
/// their error message and are skipped by aggregation.
SweepResult run_sweep(const ExperimentSpec& spec, Mode mode, int workers);

struct SummaryRow {
  ConfigPoint point;
  std::string metric;
  int episode = 0;
  int n = 0;
  double mean = 0.0;
  /// Sample standard deviation across runs; 0 for a single run.
  double stddev = 0.0;
};

std::vector<SummaryRow> aggregate(const SweepResult& sweep);

/// Flat row of the raw CSV.
struct RawRow {
  int episode = 0;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  ConfigPoint point;
};

inline constexpr std::string_view kRawHeader = "episode,metric,value,seed,algorithm,beta,zeta,alpha";
inline constexpr std::string_view kSummaryHeader = "algorithm,beta,zeta,alpha,metric,episode,n,mean,stddev";

std::vector<RawRow> raw_rows(const SweepResult& sweep);
void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows);
/// Header-only or empty input yields no rows.
std::vector<RawRow> read_raw_csv(std::istream& in);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> aggregate(const std::vector<RawRow>& rows);

/// Lower is better for error metrics, higher for everything else.
bool lower_is_better(std::string_view metric);

/// Final-checkpoint row with the best step size for every algorithm, beta,
/// zeta and metric. The earliest alpha in the grid wins ties.
std::vector<SummaryRow> best_alpha_rows(const std::vector<SummaryRow>& summary);

enum ExitCode : int { kExitOk = 0, kExitSpecError = 2, kExitPartialFailure = 3 };

struct CommandOptions {
  std::filesystem::path spec;
  std::filesystem::path out;
  int workers = 1;
  std::optional<std::uint64_t> seed;
};

/// Writes raw.csv, summary.csv, best_alpha.csv and failures.csv.
int cmd_predict(const CommandOptions& opts);
int cmd_control(const CommandOptions& opts);
/// Writes fixed_points.csv, eta.csv, corollary.csv and monotonicity.csv.
int cmd_solve(const CommandOptions& opts);
/// Reads raw.csv from the output directory (or the --spec path when it names
/// a CSV) and writes final_pivot.csv and curves.csv.
int cmd_report(const CommandOptions& opts);

/// Dispatches by name and maps exceptions onto exit codes, printing the
/// message to `err`.
int run_command(std::string_view command, const CommandOptions& opts, std::ostream& err);

}  // namespace optterm
