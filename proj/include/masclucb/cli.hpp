#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "masclucb/config.hpp"
#include "masclucb/errors.hpp"
#include "masclucb/experiment.hpp"

namespace masclucb {

inline void print_bounds(std::ostream& out, const ExperimentConfig& cfg) {
  for (const RunSpec& spec : expand(cfg)) {
    const std::uint64_t seed = run_seed(cfg.seed, 0);
    const PreparedRun prep = prepare_run(spec, seed);
    const auto& inst = prep.instance;
    const auto& c = inst.constants;
    const double l2 = prep.graph.lambda2_abs();
    const EpisodePlan plan = plan_episodes(spec.simulation.horizon, spec.n_agents, l2);
    const double beta_m = confidence_radius(plan.completed, spec.n_agents, confidence_params(spec.simulation, inst));
    const TheoreticalBounds b = theoretical_bounds(bound_inputs(spec.simulation, inst), beta_m, plan.completed,
                                                   plan.last_comm_rounds);
    out << "config " << spec.config_id << ": N=" << spec.n_agents << " topology=" << to_string(spec.topology);
    if (spec.k) out << " k=" << *spec.k;
    out << " alpha=" << inst.alpha << " T=" << spec.simulation.horizon << " seed=" << seed << '\n';
    out << "  lambda2 = " << l2 << '\n'
        << "  kappa_l = " << c.kappa_l << '\n'
        << "  kappa_h = " << c.kappa_h << '\n'
        << "  r_l = " << c.r_l << '\n'
        << "  r_h = " << c.r_h << '\n'
        << "  rho = " << b.rho << '\n'
        << "  h1 = " << b.h1 << '\n'
        << "  sigma_zeta = " << b.sigma_zeta << '\n'
        << "  q(1) = " << comm_schedule(1, spec.n_agents, l2) << '\n'
        << "  M = " << plan.completed << '\n'
        << "  q(M) = " << plan.last_comm_rounds << '\n'
        << "  beta_M = " << beta_m << '\n'
        << "  excitation_threshold(beta_M) = "
        << excitation_threshold(beta_m, c.bound_l, c.kappa_l, inst.alpha, c.r_l) << '\n'
        << "  conservative_episode_bound = " << b.cons_count_bound << '\n'
        << "  regret_bound = " << b.regret_bound << '\n';
  }
}

/// Command-line entry point. Returns 0 on success, 2 on usage or
/// configuration errors, 1 on runtime failures.
inline int cli_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent stage-wise conservative linear bandit simulator", "masclucb"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_seeds;
  std::optional<std::string> out_dir;
  std::size_t jobs = 0;
  bool quiet = false;

  auto* run_cmd = app.add_subcommand("run", "run an experiment and write CSV outputs");
  auto* validate_cmd = app.add_subcommand("validate", "check a config file");
  auto* bounds_cmd = app.add_subcommand("bounds", "print the theoretical-bound evaluation for a config");
  for (auto* sub : {run_cmd, validate_cmd, bounds_cmd}) {
    sub->add_option("config", config_path, "config file")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--seeds", n_seeds, "number of seeds per configuration")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--jobs", jobs, "parallel runs (default: all cores)");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    RunOptions opt;
    opt.seed = seed;
    opt.n_seeds = n_seeds;
    opt.output_dir = out_dir;
    opt.jobs = jobs;
    opt.quiet = quiet;
    opt.log = &err;
    const ExperimentConfig cfg = apply_overrides(load_config(config_path), opt);
    validate(cfg);

    if (validate_cmd->parsed()) {
      out << "ok: " << to_string(cfg.experiment) << ", " << expand(cfg).size() << " configuration(s) x " << cfg.n_seeds
          << " seed(s)\n";
      return 0;
    }
    if (bounds_cmd->parsed()) {
      print_bounds(out, cfg);
      return 0;
    }
    const ExperimentResult res = run_experiment(cfg, opt);
    if (!quiet) {
      out << "wrote " << res.files.size() << " file(s) to " << cfg.output_dir << '\n';
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int cli_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return cli_entry(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace masclucb
