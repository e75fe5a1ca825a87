// Scenario-driven command line for the nonadiabat toolkit.
//
//   nonadiabat <verb> <scenario.json> [--out DIR] [--seed N] [--dt X]
//              [--ntraj N] [--tol-override KEY=VAL]...
//
// Verbs: validate | steady | propagate | rates | trajectories | kraus-audit
//        | equivalence
//
// Exit codes: 0 success, 1 input error, 2 physics-check failure (the report
// files are still written). NONADIABAT_THREADS caps ensemble workers.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nonadiabat/nonadiabat.hpp"

namespace {

struct VerbArgs {
  std::string scenario_path;
  nonadiabat::RunOptions options;
  std::vector<std::string> tol_overrides;
};

void add_common_options(CLI::App* cmd, VerbArgs& args) {
  cmd->add_option("scenario", args.scenario_path, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.options.out_dir, "Output directory");
  cmd->add_option("--seed", args.options.seed, "Override run.base_seed");
  cmd->add_option("--dt", args.options.dt, "Override run.dt");
  cmd->add_option("--ntraj", args.options.ntraj, "Override run.n_traj");
  cmd->add_option("--tol-override", args.tol_overrides,
                  "Tolerance override KEY=VAL (repeatable)");
}

void parse_tol_overrides(VerbArgs& args) {
  for (const std::string& kv : args.tol_overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw nonadiabat::ParseError("--tol-override expects KEY=VAL, got '" + kv + "'");
    args.options.tol_overrides.emplace_back(kv.substr(0, eq),
                                            std::stod(kv.substr(eq + 1)));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-production numerics for driven Lindblad systems"};
  app.require_subcommand(1);

  const std::vector<std::string> verbs = {"validate",      "steady",
                                          "propagate",     "rates",
                                          "trajectories",  "kraus-audit",
                                          "equivalence"};
  std::vector<VerbArgs> args(verbs.size());
  for (std::size_t i = 0; i < verbs.size(); ++i)
    add_common_options(app.add_subcommand(verbs[i]), args[i]);

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < verbs.size(); ++i) {
    if (!app.get_subcommand(verbs[i])->parsed()) continue;
    try {
      parse_tol_overrides(args[i]);
      const nonadiabat::Scenario sc = nonadiabat::parse_scenario(args[i].scenario_path);
      const nonadiabat::RunReport report =
          nonadiabat::run_command(verbs[i], sc, args[i].options);
      return report.exit_code;
    } catch (const nonadiabat::Error& e) {
      std::cerr << "error [" << e.code() << "] " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
