#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "optterm/exact_solver.hpp"
#include "optterm/harness.hpp"

namespace optterm {

namespace {

namespace fs = std::filesystem;

fs::path output_dir(const CommandOptions& opts, const std::string& fallback) {
  fs::path out = opts.out.empty() ? fs::path(fallback) : opts.out;
  if (out.empty()) throw SpecError("no output directory: pass --out or set 'output' in the spec");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw SpecError(fmt::format("cannot create {}: {}", out.string(), ec.message()));
  return out;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  body(out);
  out.flush();
  if (!out) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
}

ExperimentSpec spec_with_seed(const CommandOptions& opts) {
  ExperimentSpec spec = load_spec(opts.spec);
  if (opts.seed) spec.seeds.base = *opts.seed;
  return spec;
}

struct Variant {
  Algorithm algorithm;
  double beta;
  double zeta;
  std::string metric;

  auto operator<=>(const Variant&) const = default;
};

/// Final-checkpoint row of every (point, metric).
std::vector<SummaryRow> final_rows(const std::vector<SummaryRow>& summary) {
  std::vector<SummaryRow> out;
  for (const SummaryRow& r : summary) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SummaryRow& f) { return f.point == r.point && f.metric == r.metric; });
    if (it == out.end()) {
      out.push_back(r);
    } else if (r.episode > it->episode) {
      *it = r;
    }
  }
  return out;
}

/// Best step size per variant at the final checkpoint; the earliest alpha in
/// the grid wins ties.
std::map<Variant, SummaryRow> best_alpha(const std::vector<SummaryRow>& summary) {
  std::map<Variant, SummaryRow> best;
  for (const SummaryRow& r : final_rows(summary)) {
    const Variant v{r.point.algorithm, r.point.beta, r.point.zeta, r.metric};
    auto it = best.find(v);
    if (it == best.end()) {
      best.emplace(v, r);
      continue;
    }
    const bool better = lower_is_better(r.metric) ? r.mean < it->second.mean : r.mean > it->second.mean;
    if (better) it->second = r;
  }
  return best;
}

void write_best_alpha(std::ostream& out, const std::map<Variant, SummaryRow>& best) {
  out << "algorithm,beta,zeta,metric,alpha,episode,n,mean,stddev\n";
  for (const auto& [v, r] : best) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(v.algorithm), v.beta, v.zeta, v.metric, r.point.alpha,
                       r.episode, r.n, r.mean, r.stddev);
  }
}

int run_learning(const CommandOptions& opts, Mode mode) {
  const ExperimentSpec spec = spec_with_seed(opts);
  const fs::path out = output_dir(opts, spec.output);
  const SweepResult sweep = run_sweep(spec, mode, opts.workers);
  const std::vector<RawRow> rows = raw_rows(sweep);
  const std::vector<SummaryRow> summary = aggregate(rows);
  write_file(out / "raw.csv", [&](std::ostream& o) { write_raw_csv(o, rows); });
  write_file(out / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, summary); });
  write_file(out / "best_alpha.csv", [&](std::ostream& o) { write_best_alpha(o, best_alpha(summary)); });
  write_file(out / "failures.csv", [&](std::ostream& o) {
    o << "algorithm,beta,zeta,alpha,seed,error\n";
    for (const RunRecord& r : sweep.runs) {
      if (r.result) continue;
      std::string msg = r.error;
      std::replace_if(msg.begin(), msg.end(), [](char c) { return c == ',' || c == '\n'; }, ' ');
      o << fmt::format("{},{},{},{},{},{}\n", to_string(r.point.algorithm), r.point.beta, r.point.zeta, r.point.alpha,
                       r.seed, msg);
    }
  });
  return sweep.failures() > 0 ? kExitPartialFailure : kExitOk;
}

}  // namespace

std::vector<SummaryRow> best_alpha_rows(const std::vector<SummaryRow>& summary) {
  std::vector<SummaryRow> out;
  for (const auto& [v, r] : best_alpha(summary)) out.push_back(r);
  return out;
}

int cmd_predict(const CommandOptions& opts) { return run_learning(opts, Mode::predict); }
int cmd_control(const CommandOptions& opts) { return run_learning(opts, Mode::control); }

int cmd_solve(const CommandOptions& opts) {
  const ExperimentSpec spec = spec_with_seed(opts);
  TabularTask task = [&] {
    if (spec.task == TaskKind::chain19) return build_chain(spec.chain);
    if (spec.task == TaskKind::cliffwalk) return build_cliffwalk(spec.cliffwalk).task;
    throw SpecError("exact solver requires tabular task");
  }();
  const fs::path out = output_dir(opts, spec.output);
  const OptionSet& base = task.options;
  const PolicyOverOptions uniform = PolicyOverOptions::uniform(base);
  std::vector<double> betas = spec.betas;
  std::sort(betas.begin(), betas.end());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());
  std::vector<double> zetas = spec.zetas;
  std::sort(zetas.begin(), zetas.end());
  zetas.erase(std::unique(zetas.begin(), zetas.end()), zetas.end());

  std::vector<ControlResult> greedy;
  for (double b : betas) {
    const OptionSet opts_b = base.with_beta(b);
    greedy.push_back(control_iteration(opts_b, pessimistic_init(opts_b)));
  }

  write_file(out / "fixed_points.csv", [&](std::ostream& o) {
    o << "mu,beta,state,option,value\n";
    for (std::size_t i = 0; i < betas.size(); ++i) {
      const StateOptionQ q = fixed_point_beta(base.with_beta(betas[i]), uniform);
      const std::pair<const char*, const StateOptionQ*> tables[] = {{"uniform", &q}, {"greedy", &greedy[i].q}};
      for (const auto& [name, table] : tables) {
        for (int s = 0; s < table->n_states(); ++s) {
          for (int op = 0; op < table->n_options(); ++op) {
            o << fmt::format("{},{},{},{},{}\n", name, betas[i], s, op, table->values(s, op));
          }
        }
      }
    }
  });
  write_file(out / "eta.csv", [&](std::ostream& o) {
    o << "beta,zeta,state,option,eta\n";
    for (double b : betas) {
      for (double z : zetas) {
        const Matrix eta = contraction_eta(base.with_terminations(z, b), uniform);
        for (int s = 0; s < eta.rows(); ++s) {
          for (int op = 0; op < eta.cols(); ++op) o << fmt::format("{},{},{},{},{}\n", b, z, s, op, eta(s, op));
        }
      }
    }
  });
  write_file(out / "corollary.csv", [&](std::ostream& o) {
    o << "zeta,mu_prob,threshold,degenerate\n";
    const double mu_prob = 1.0 / base.size();
    for (double z : zetas) {
      const CorollaryThreshold t = corollary_threshold(z, mu_prob);
      o << fmt::format("{},{},{},{}\n", z, mu_prob, t.value, t.degenerate ? 1 : 0);
    }
  });
  write_file(out / "monotonicity.csv", [&](std::ostream& o) {
    o << "beta_lo,beta_hi,max_violation,holds\n";
    for (std::size_t i = 1; i < betas.size(); ++i) {
      const MonotonicityReport rep = check_monotonicity(base, greedy[i].mu, betas[i], betas[i - 1]);
      o << fmt::format("{},{},{},{}\n", betas[i - 1], betas[i], rep.max_violation, rep.holds ? 1 : 0);
    }
  });
  return kExitOk;
}

int cmd_report(const CommandOptions& opts) {
  fs::path raw;
  fs::path out;
  if (opts.spec.extension() == ".csv") {
    raw = opts.spec;
    out = output_dir(opts, raw.parent_path().string());
  } else {
    const ExperimentSpec spec = spec_with_seed(opts);
    out = output_dir(opts, spec.output);
    raw = out / "raw.csv";
  }
  std::ifstream in(raw);
  if (!in) throw SpecError(fmt::format("no results at {}", raw.string()));
  const std::vector<SummaryRow> summary = aggregate(read_raw_csv(in));
  const auto best = best_alpha(summary);

  std::set<double> betas;
  std::set<double> zetas;
  std::vector<std::pair<Algorithm, std::string>> groups;
  for (const auto& [v, r] : best) {
    betas.insert(v.beta);
    zetas.insert(v.zeta);
    if (std::find(groups.begin(), groups.end(), std::pair{v.algorithm, v.metric}) == groups.end()) {
      groups.emplace_back(v.algorithm, v.metric);
    }
  }
  write_file(out / "final_pivot.csv", [&](std::ostream& o) {
    o << "algorithm,metric,zeta";
    for (double b : betas) o << fmt::format(",beta={}", b);
    o << '\n';
    for (const auto& [algo, metric] : groups) {
      for (double z : zetas) {
        o << fmt::format("{},{},{}", to_string(algo), metric, z);
        for (double b : betas) {
          // Missing points stay visible rather than being filled in.
          const auto it = best.find(Variant{algo, b, z, metric});
          o << (it == best.end() ? std::string(",NA") : fmt::format(",{}", it->second.mean));
        }
        o << '\n';
      }
    }
  });
  write_file(out / "curves.csv", [&](std::ostream& o) {
    std::vector<SummaryRow> curves;
    for (const SummaryRow& r : summary) {
      const auto it = best.find(Variant{r.point.algorithm, r.point.beta, r.point.zeta, r.metric});
      if (it != best.end() && it->second.point.alpha == r.point.alpha) curves.push_back(r);
    }
    write_summary_csv(o, curves);
  });
  return kExitOk;
}

int run_command(std::string_view command, const CommandOptions& opts, std::ostream& err) {
  try {
    if (command == "solve") return cmd_solve(opts);
    if (command == "predict") return cmd_predict(opts);
    if (command == "control") return cmd_control(opts);
    if (command == "report") return cmd_report(opts);
    throw SpecError(fmt::format("unknown command '{}'", command));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitSpecError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace optterm
