// Command-line runner: Schwarz runs, lemma verification, rate comparison and
// the desk-scale sweep.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pasm/experiment.hpp"

namespace {

struct Flag {
  std::string key;
  std::string help;
  bool boolean = false;
};

// Flags shared by all subcommands; each maps to one config-file key.
const std::vector<Flag> kFlags = {
    {"p", "exponent p > 1"},
    {"f", "constant source term"},
    {"h-inv", "fine mesh subdivisions per side (1/h)"},
    {"H-inv", "coarse mesh subdivisions per side (1/H)"},
    {"delta-layers", "overlap width in fine layers (delta/h)"},
    {"tau", "relaxation parameter (default tau0)"},
    {"iters", "maximum outer iterations"},
    {"obstacle", "enable the disk obstacle", true},
    {"obstacle-height", "obstacle height inside the disk"},
    {"obstacle-radius", "obstacle disk radius"},
    {"seed", "random seed"},
    {"serial", "solve subproblems on one thread", true},
    {"threads", "worker threads (0 = hardware)"},
    {"out", "output file (sweep: output directory)"},
    {"budget", "reference solution iteration budget"},
    {"cache-dir", "reference solution cache directory (empty disables)"},
    {"no-timing", "write 0 in the walltime column", true},
    {"error-floor", "stop once the energy error is below this"},
    {"fista-tol", "subproblem stop tolerance"},
    {"fista-max-iters", "subproblem iteration cap"},
    {"samples", "verification sample pairs"},
    {"bl-samples", "vector-inequality samples"},
    {"verify-h-inv", "verification mesh subdivisions"},
    {"amplitude", "verification sample amplitude (times h)"},
    {"phi-fault", "testing hook: scale Phi in the scaling check"},
    {"run", "convergence CSV for rates"},
    {"report", "verification CSV for rates"},
    {"c0-samples", "samples for the stable-split constant"},
    {"preset", "sweep preset name"},
};

struct Parsed {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

void add_flags(CLI::App* sub, Parsed& parsed) {
  sub->add_option("--config", parsed.config_path, "flat key=value file with the same keys as the flags");
  for (const Flag& flag : kFlags) {
    if (flag.boolean) {
      sub->add_flag("--" + flag.key, parsed.switches[flag.key], flag.help);
    } else {
      sub->add_option("--" + flag.key, parsed.values[flag.key], flag.help);
    }
  }
}

pasm::ExperimentConfig resolve(CLI::App* sub, const Parsed& parsed) {
  pasm::ExperimentConfig cfg;
  if (!parsed.config_path.empty()) pasm::load_config_file(cfg, parsed.config_path);
  for (const Flag& flag : kFlags) {
    if (sub->count("--" + flag.key) == 0) continue;
    if (flag.boolean) {
      pasm::apply_config_entry(cfg, flag.key, parsed.switches.at(flag.key) ? "true" : "false");
    } else {
      pasm::apply_config_entry(cfg, flag.key, parsed.values.at(flag.key));
    }
  }
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level additive Schwarz for the p-Laplacian"};
  app.require_subcommand(1);
  struct Command {
    CLI::App* sub;
    int (*fn)(const pasm::ExperimentConfig&, std::ostream&);
  };
  std::vector<Command> commands;
  Parsed parsed[4];
  const char* names[] = {"run", "verify", "rates", "sweep"};
  const char* help[] = {"run the Schwarz iteration and write a convergence CSV",
                        "check the analytic inequalities on random samples",
                        "compare an observed rate with the theoretical bound",
                        "run a preset grid of geometries"};
  int (*fns[])(const pasm::ExperimentConfig&, std::ostream&) = {pasm::cmd_run, pasm::cmd_verify,
                                                                 pasm::cmd_rates, pasm::cmd_sweep};
  for (int i = 0; i < 4; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    add_flags(sub, parsed[i]);
    commands.push_back({sub, fns[i]});
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pasm::kExitInvalidConfig;
  }
  for (int i = 0; i < 4; ++i) {
    if (!commands[i].sub->parsed()) continue;
    pasm::ExperimentConfig cfg;
    try {
      cfg = resolve(commands[i].sub, parsed[i]);
    } catch (const std::exception& e) {
      std::cerr << "error: invalid configuration: " << e.what() << '\n';
      return pasm::kExitInvalidConfig;
    }
    return commands[i].fn(cfg, std::cout);
  }
  return pasm::kExitInvalidConfig;
}
