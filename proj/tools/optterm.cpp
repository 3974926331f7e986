// Command-line front end for the experiment harness.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "optterm/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Option termination experiments: exact solutions, prediction, control and reports."};
  app.require_subcommand(1);

  optterm::CommandOptions opts;
  std::uint64_t seed = 0;
  for (const char* name : {"solve", "predict", "control", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--spec", opts.spec, "Experiment spec (JSON); report also accepts a raw CSV")->required();
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--workers", opts.workers, "Concurrent runs")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Base seed, overriding the spec");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : optterm::kExitSpecError;
  }
  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed") > 0) opts.seed = seed;
  return optterm::run_command(chosen->get_name(), opts, std::cerr);
}
