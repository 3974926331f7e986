#include "optterm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optterm/pinball_learner.hpp"

namespace optterm {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw SpecError(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

std::vector<double> number_grid(const json& j, std::string_view key) {
  if (!j.is_array() || j.empty()) throw SpecError(fmt::format("'{}' must be a non-empty array", key));
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

template <class T>
void read_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).template get<T>();
}

void read_chain(const json& j, ChainConfig& c) {
  reject_unknown(j, {"n_interior", "reward_right", "reward_left", "gamma"}, "chain environment");
  read_if(j, "n_interior", c.n_interior);
  read_if(j, "reward_right", c.reward_right);
  read_if(j, "reward_left", c.reward_left);
  read_if(j, "gamma", c.gamma);
}

void read_cliffwalk(const json& j, CliffwalkConfig& c) {
  reject_unknown(j, {"n", "r_goal", "r_cliff", "r_step", "gamma", "start_row", "start_col", "goal_row", "goal_col"},
                 "cliffwalk environment");
  read_if(j, "n", c.n);
  read_if(j, "r_goal", c.r_goal);
  read_if(j, "r_cliff", c.r_cliff);
  read_if(j, "r_step", c.r_step);
  read_if(j, "gamma", c.gamma);
  read_if(j, "start_row", c.start_row);
  read_if(j, "start_col", c.start_col);
  read_if(j, "goal_row", c.goal_row);
  read_if(j, "goal_col", c.goal_col);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw SpecError(fmt::format("bad number '{}' in results", s));
  return v;
}

TabularTask tabular_task(const ExperimentSpec& spec) {
  switch (spec.task) {
    case TaskKind::chain19: return build_chain(spec.chain);
    case TaskKind::cliffwalk: return build_cliffwalk(spec.cliffwalk).task;
    case TaskKind::pinball: break;
  }
  throw SpecError("exact solver requires tabular task");
}

}  // namespace

std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::chain19: return "chain19";
    case TaskKind::cliffwalk: return "cliffwalk";
    case TaskKind::pinball: return "pinball";
  }
  return "?";
}

TaskKind task_from_string(std::string_view name) {
  if (name == "chain19") return TaskKind::chain19;
  if (name == "cliffwalk") return TaskKind::cliffwalk;
  if (name == "pinball") return TaskKind::pinball;
  throw SpecError(fmt::format("unknown task '{}'", name));
}

void ExperimentSpec::validate() const {
  if (algorithms.empty() || betas.empty() || zetas.empty() || alphas.empty()) throw SpecError("grids must be non-empty");
  auto unit = [](const std::vector<double>& g) {
    return std::all_of(g.begin(), g.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  };
  if (!unit(betas) || !unit(zetas)) throw SpecError("beta and zeta grids must lie in [0,1]");
  if (!std::all_of(alphas.begin(), alphas.end(), [](double a) { return a > 0.0; })) {
    throw SpecError("alpha grid must be positive");
  }
  if (episodes <= 0) throw SpecError("episodes must be positive");
  if (eval_interval <= 0 || eval_episodes <= 0 || max_episode_steps <= 0) {
    throw SpecError("eval_interval, eval_episodes and max_episode_steps must be positive");
  }
  if (seeds.count <= 0 || seeds.runs_per_seed <= 0) throw SpecError("seed counts must be positive");
  if (epsilon < 0.0 || epsilon > 1.0 || epsilon_opt < 0.0 || epsilon_opt > 1.0) {
    throw SpecError("exploration rates must lie in [0,1]");
  }
  if (task == TaskKind::pinball && !pinball) throw SpecError("pinball task needs a 'pinball' board");
}

ExperimentSpec spec_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw SpecError("spec must be a JSON object");
  reject_unknown(j,
                 {"task", "algorithms", "betas", "zetas", "alphas", "seeds", "episodes", "eval_interval",
                  "eval_episodes", "max_episode_steps", "epsilon", "epsilon_opt", "environment", "pinball", "tiles",
                  "output"},
                 "spec");
  ExperimentSpec spec;
  try {
    spec.task = task_from_string(j.at("task").get<std::string>());
    // Learning fields may be left out of specs that are only solved.
    if (j.contains("algorithms")) {
      spec.algorithms.clear();
      const json& algos = j["algorithms"];
      if (!algos.is_array() || algos.empty()) throw SpecError("'algorithms' must be a non-empty array");
      for (const auto& a : algos) {
        try {
          spec.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
        } catch (const ConfigError& e) {
          throw SpecError(e.what());
        }
      }
    }
    spec.betas = number_grid(j.at("betas"), "betas");
    spec.zetas = number_grid(j.at("zetas"), "zetas");
    if (j.contains("alphas")) spec.alphas = number_grid(j["alphas"], "alphas");
    if (j.contains("seeds")) {
      const json& s = j["seeds"];
      reject_unknown(s, {"count", "runs_per_seed", "base"}, "seeds");
      read_if(s, "count", spec.seeds.count);
      read_if(s, "runs_per_seed", spec.seeds.runs_per_seed);
      read_if(s, "base", spec.seeds.base);
    }
    read_if(j, "episodes", spec.episodes);
    read_if(j, "eval_interval", spec.eval_interval);
    read_if(j, "eval_episodes", spec.eval_episodes);
    read_if(j, "max_episode_steps", spec.max_episode_steps);
    read_if(j, "epsilon", spec.epsilon);
    read_if(j, "epsilon_opt", spec.epsilon_opt);
    read_if(j, "output", spec.output);
    if (j.contains("environment")) {
      if (spec.task == TaskKind::chain19) read_chain(j["environment"], spec.chain);
      if (spec.task == TaskKind::cliffwalk) read_cliffwalk(j["environment"], spec.cliffwalk);
      if (spec.task == TaskKind::pinball) throw SpecError("pinball settings belong under 'pinball'");
    }
    if (j.contains("pinball")) {
      const json& p = j["pinball"];
      if (p.is_string()) {
        std::filesystem::path path = p.get<std::string>();
        if (path.is_relative()) path = base_dir / path;
        spec.pinball = load_pinball_config(path);
      } else {
        spec.pinball = pinball_config_from_json(p);
      }
    }
    if (j.contains("tiles")) {
      const json& t = j["tiles"];
      reject_unknown(t, {"position_tilings", "velocity_tilings", "tiles_per_dim"}, "tiles");
      read_if(t, "position_tilings", spec.tiles.position_tilings);
      read_if(t, "velocity_tilings", spec.tiles.velocity_tilings);
      read_if(t, "tiles_per_dim", spec.tiles.tiles_per_dim);
    }
  } catch (const json::exception& e) {
    throw SpecError(e.what());
  } catch (const SpecError&) {
    throw;
  } catch (const ConfigError& e) {
    throw SpecError(e.what());
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(fmt::format("cannot open spec {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SpecError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return spec_from_json(j, path.parent_path());
}

std::vector<ConfigPoint> config_points(const ExperimentSpec& spec) {
  std::vector<ConfigPoint> out;
  for (Algorithm a : spec.algorithms) {
    for (double beta : spec.betas) {
      if (a == Algorithm::plain_onpolicy) {
        for (double alpha : spec.alphas) out.push_back({a, beta, beta, alpha});
        continue;
      }
      for (double zeta : spec.zetas) {
        for (double alpha : spec.alphas) out.push_back({a, beta, zeta, alpha});
      }
    }
  }
  return out;
}

RunResult run_single(const ExperimentSpec& spec, Mode mode, const ConfigPoint& point, std::uint64_t seed) {
  LearnerConfig lc;
  lc.algorithm = point.algorithm;
  lc.alpha = point.alpha;
  lc.beta = point.beta;
  lc.zeta = point.zeta;
  lc.epsilon = spec.epsilon;
  lc.epsilon_opt = spec.epsilon_opt;
  lc.seed = seed;
  lc.episodes = spec.episodes;
  lc.eval_interval = spec.eval_interval;
  lc.eval_episodes = spec.eval_episodes;
  lc.max_episode_steps = spec.max_episode_steps;

  RunResult r;
  if (spec.task == TaskKind::pinball) {
    if (mode != Mode::control) throw SpecError("pinball supports control only");
    r = run_pinball_control(*spec.pinball, lc, spec.tiles);
  } else {
    const TabularTask task = tabular_task(spec);
    r = mode == Mode::predict ? run_prediction(task, PolicyOverOptions::uniform(task.options), lc)
                              : run_control(task, lc);
  }
  r.rows.push_back({spec.episodes, "truncated_episodes", static_cast<double>(r.truncated_episodes)});
  return r;
}

int SweepResult::failures() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunRecord& r) { return !r.result; }));
}

SweepResult run_sweep(const ExperimentSpec& spec, Mode mode, int workers) {
  spec.validate();
  if (workers < 1) throw SpecError("workers must be at least 1");
  if (spec.task == TaskKind::pinball && mode == Mode::predict) throw SpecError("pinball supports control only");
  SweepResult sweep;
  for (const ConfigPoint& p : config_points(spec)) {
    for (int i = 0; i < spec.seeds.total(); ++i) {
      sweep.runs.push_back({p, i, spec.seeds.base + static_cast<std::uint64_t>(i), std::nullopt, {}});
    }
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < sweep.runs.size(); k = next++) {
      RunRecord& rec = sweep.runs[k];
      try {
        rec.result = run_single(spec, mode, rec.point, rec.seed);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
  };
  const int n = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(sweep.runs.size(), 1)));
  std::vector<std::jthread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  return sweep;
}

std::vector<RawRow> raw_rows(const SweepResult& sweep) {
  std::vector<RawRow> out;
  for (const RunRecord& rec : sweep.runs) {
    if (!rec.result) continue;
    for (const MetricRow& m : rec.result->rows) out.push_back({m.episode, m.metric, m.value, rec.seed, rec.point});
  }
  return out;
}

void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows) {
  out << kRawHeader << '\n';
  for (const RawRow& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.episode, r.metric, r.value, r.seed, to_string(r.point.algorithm),
                       r.point.beta, r.point.zeta, r.point.alpha);
  }
}

std::vector<RawRow> read_raw_csv(std::istream& in) {
  std::vector<RawRow> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRawHeader) throw SpecError("results file does not start with the raw CSV header");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw SpecError(fmt::format("malformed results row '{}'", line));
    try {
      RawRow r;
      r.episode = std::stoi(cells[0]);
      r.metric = cells[1];
      r.value = parse_double(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.point = {algorithm_from_string(cells[4]), parse_double(cells[5]), parse_double(cells[6]),
                 parse_double(cells[7])};
      out.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw SpecError(fmt::format("malformed results row '{}': {}", line, e.what()));
    }
  }
  return out;
}

std::vector<SummaryRow> aggregate(const std::vector<RawRow>& rows) {
  // Points and metrics keep their first-appearance order, episodes ascend.
  std::vector<ConfigPoint> points;
  std::vector<std::string> metrics;
  auto index_of = [](auto& list, const auto& v) {
    const auto it = std::find(list.begin(), list.end(), v);
    if (it != list.end()) return static_cast<int>(it - list.begin());
    list.push_back(v);
    return static_cast<int>(list.size()) - 1;
  };
  std::map<std::tuple<int, int, int>, std::vector<double>> groups;
  for (const RawRow& r : rows) {
    groups[{index_of(points, r.point), index_of(metrics, r.metric), r.episode}].push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    const auto [p, m, episode] = key;
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    out.push_back({points[static_cast<std::size_t>(p)], metrics[static_cast<std::size_t>(m)], episode,
                   static_cast<int>(values.size()), mean, sd});
  }
  return out;
}

std::vector<SummaryRow> aggregate(const SweepResult& sweep) { return aggregate(raw_rows(sweep)); }

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const SummaryRow& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.point.algorithm), r.point.beta, r.point.zeta,
                       r.point.alpha, r.metric, r.episode, r.n, r.mean, r.stddev);
  }
}

bool lower_is_better(std::string_view metric) { return metric.find("error") != std::string_view::npos; }

}  // namespace optterm
