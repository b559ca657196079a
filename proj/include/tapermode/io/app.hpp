#pragma once

// Argument handling for the tapermode executable. run_cli is callable
// in-process so the tests can drive it without spawning a shell.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tapermode/errors.hpp"
#include "tapermode/io/commands.hpp"
#include "tapermode/io/run_config.hpp"

namespace tapermode::io {

enum ExitCode : int { kExitOk = 0, kExitUnexpected = 1, kExitConfig = 2, kExitSolver = 3, kExitFit = 4 };

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline int resolve_threads(std::optional<int> flag) {
  if (flag) {
    if (*flag < 1) throw ConfigError("--threads must be >= 1");
    return *flag;
  }
  if (const char* env = std::getenv("TAPERMODE_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(env, &used);
      if (used == std::string(env).size() && n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("TAPERMODE_THREADS must be a positive integer (got '") + env + "')");
  }
  return 1;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tapermode: radial modes of ion chains in a tapered Paul trap"};
  app.require_subcommand(1);

  std::string config_path, out_path, input_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration (defaults apply when omitted)");
    sub->add_option("--out", out_path, "output file (directory for pipeline); stdout when omitted");
    sub->add_option("--seed", seed, "noise seed, overrides analysis.noise_seed");
    sub->add_option("--threads", threads, "worker threads (env TAPERMODE_THREADS)");
    sub->add_flag("--verbose", verbose, "progress and warnings on stderr");
  };
  CLI::App* eq = app.add_subcommand("equilibrium", "axial equilibrium positions");
  CLI::App* modes = app.add_subcommand("modes", "normal modes at one axial confinement");
  CLI::App* sweep = app.add_subcommand("sweep", "radial modes across an axial-confinement sweep");
  CLI::App* sim = app.add_subcommand("simulate", "driven response spectrum");
  CLI::App* fit = app.add_subcommand("fit", "Lorentzian fits and eigenvector reconstruction");
  CLI::App* pipe = app.add_subcommand("pipeline", "synthetic measurement and comparison with theory");
  for (CLI::App* s : {eq, modes, sweep, sim, fit, pipe}) add_common(s);
  fit->add_option("--input", input_path, "spectrum CSV as written by simulate")->required();
  pipe->get_option("--out")->required();

  std::vector<const char*> argv{"tapermode"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    RunConfig config = config_path.empty() ? parse_run_config("{}") : parse_run_config(read_text_file(config_path));
    if (seed) config.noise_seed = *seed;
    CommandOptions options;
    options.threads = resolve_threads(threads);
    options.verbose = verbose;
    options.log = &err;

    if (pipe->parsed()) {
      const ReproductionReport r = cmd_pipeline(config, out_path, options);
      detail::log(options, std::to_string(r.points.size() - static_cast<std::size_t>(r.failed_points())) + " of " +
                               std::to_string(r.points.size()) + " points reduced");
      return kExitOk;
    }

    std::ofstream file;
    std::ostream* sink = &out;
    if (!out_path.empty()) {
      file.open(out_path, std::ios::binary);
      if (!file) throw ConfigError("cannot write " + out_path);
      sink = &file;
    }
    if (eq->parsed()) {
      cmd_equilibrium(config, *sink, options);
    } else if (modes->parsed()) {
      cmd_modes(config, *sink, options);
    } else if (sweep->parsed()) {
      cmd_sweep(config, *sink, options);
    } else if (sim->parsed()) {
      cmd_simulate(config, *sink, options);
    } else if (fit->parsed()) {
      std::ifstream in(input_path, std::ios::binary);
      if (!in) throw ConfigError("cannot open " + input_path);
      cmd_fit(config, in, *sink, options);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << '\n';
    return kExitFit;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnexpected;
  }
}

}  // namespace tapermode::io
