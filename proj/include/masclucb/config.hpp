#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "masclucb/environment.hpp"
#include "masclucb/errors.hpp"
#include "masclucb/graph.hpp"
#include "masclucb/simulator.hpp"

namespace masclucb {

enum class ExperimentKind { single, connectivity_sweep, alpha_sweep, n_scaling };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single: return "single";
    case ExperimentKind::connectivity_sweep: return "connectivity_sweep";
    case ExperimentKind::alpha_sweep: return "alpha_sweep";
    case ExperimentKind::n_scaling: return "n_scaling";
  }
  return "?";
}

// Name of the swept parameter for each experiment family.
inline std::string_view sweep_parameter(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::connectivity_sweep: return "k";
    case ExperimentKind::alpha_sweep: return "alpha";
    case ExperimentKind::n_scaling: return "N";
    case ExperimentKind::single: return "";
  }
  return "";
}

/// Experiment description. Defaults: d=2,
/// T=20000, R=0.01, S=1, lambda=0.1, delta=0.01, L=1, 50 seeds.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::single;
  std::size_t d = 2;
  std::size_t T = 20000;
  std::size_t N = 100;
  double R = 0.01;
  double S = 1.0;
  double L = 1.0;
  double lambda = 0.1;
  double delta = 0.01;
  double alpha = 0.2;
  TopologyKind topology = TopologyKind::complete;
  std::optional<std::size_t> k;
  std::optional<double> p;
  std::size_t n_seeds = 50;
  std::uint64_t seed = 1;
  std::size_t action_count = 64;
  BaselineSchedule baseline_schedule = BaselineSchedule::rotating;
  double baseline_fraction = 0.5;
  double baseline_spread = 0.23;
  double theta_norm = 0.8;
  bool write_raw = true;
  std::string output_dir = "out";
  std::vector<double> sweep_values;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_number(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + value + "'");
}

inline ExperimentKind parse_experiment(const std::string& value) {
  if (value == "single") return ExperimentKind::single;
  if (value == "connectivity_sweep") return ExperimentKind::connectivity_sweep;
  if (value == "alpha_sweep") return ExperimentKind::alpha_sweep;
  if (value == "n_scaling") return ExperimentKind::n_scaling;
  throw ConfigError("config: unknown experiment '" + value +
                    "' (valid: single, connectivity_sweep, alpha_sweep, n_scaling)");
}

}  // namespace detail

/// Throws ConfigError naming the violated range.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (c.d < 1) fail("d must be >= 1");
  if (c.T < 1) fail("T must be >= 1");
  if (c.N < 1) fail("N must be >= 1");
  if (!(c.R >= 0.0)) fail("R must be >= 0");
  if (!(c.S > 0.0)) fail("S must be > 0");
  if (!(c.L > 0.0)) fail("L must be > 0");
  if (!(c.lambda > 0.0)) fail("lambda must be > 0");
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta must lie in (0,1)");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail("alpha must lie in (0,1), got " + std::to_string(c.alpha));
  if (c.n_seeds < 1) fail("n_seeds must be >= 1");
  if (c.action_count < 2) fail("action_count must be >= 2");
  if (!(c.theta_norm > 0.0 && c.theta_norm <= c.S && c.theta_norm * c.L <= 1.0)) {
    fail("theta_norm must lie in (0, min(S, 1/L)]");
  }
  if (!(c.baseline_fraction > 0.0 && c.baseline_fraction < 1.0)) fail("baseline_fraction must lie in (0,1)");
  if (c.baseline_spread < 0.0) fail("baseline_spread must be >= 0");
  if (std::hypot(c.baseline_fraction, c.baseline_spread) > c.L) fail("baseline action norm sqrt(fraction^2+spread^2) exceeds L");

  const auto param = sweep_parameter(c.experiment);
  if (c.experiment == ExperimentKind::single) {
    if (!c.sweep_values.empty()) fail("experiment 'single' takes no [sweep] values");
  } else if (c.sweep_values.empty()) {
    fail("experiment '" + std::string(to_string(c.experiment)) + "' requires [sweep] " + std::string(param) + " = ...");
  }

  auto check_topology = [&](std::size_t n, std::optional<std::size_t> k) {
    if (c.topology == TopologyKind::k_regular || c.experiment == ExperimentKind::connectivity_sweep) {
      if (!k) fail("k_regular topology requires k");
      if (*k < 1 || *k > n - 1 || n < 2) fail("k must lie in [1, N-1] = [1, " + std::to_string(n - 1) + "]");
      if ((n * *k) % 2 != 0) fail("N*k must be even");
    }
    if (c.topology == TopologyKind::erdos_renyi && (!c.p || !(*c.p > 0.0 && *c.p <= 1.0))) {
      fail("erdos_renyi topology requires p in (0,1]");
    }
  };

  switch (c.experiment) {
    case ExperimentKind::single:
      check_topology(c.N, c.k);
      break;
    case ExperimentKind::connectivity_sweep:
      for (double v : c.sweep_values) {
        if (v != static_cast<double>(static_cast<std::size_t>(v)) || v < 1.0) {
          fail("sweep k values must be positive integers in [1, N-1]");
        }
        check_topology(c.N, static_cast<std::size_t>(v));
      }
      break;
    case ExperimentKind::alpha_sweep:
      check_topology(c.N, c.k);
      for (double v : c.sweep_values) {
        if (!(v > 0.0 && v < 1.0)) fail("sweep alpha values must lie in (0,1)");
      }
      break;
    case ExperimentKind::n_scaling:
      for (double v : c.sweep_values) {
        if (v != static_cast<double>(static_cast<std::size_t>(v)) || v < 1.0) {
          fail("sweep N values must be positive integers");
        }
        check_topology(static_cast<std::size_t>(v), c.k);
      }
      break;
  }
}

/// Parses the flat `key = value` format with an optional `[sweep]` section.
/// `#` starts a comment. Unknown keys are rejected.
inline ExperimentConfig parse_config(std::string_view text) {
  using detail::parse_count;
  using detail::parse_number;
  ExperimentConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  bool in_sweep = false;
  std::string sweep_key;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '[') {
      if (trimmed != "[sweep]") throw ConfigError("config line " + std::to_string(lineno) + ": unknown section " + trimmed);
      in_sweep = true;
      continue;
    }
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(trimmed).substr(0, eq));
    const std::string value = detail::trim(std::string_view(trimmed).substr(eq + 1));

    if (in_sweep) {
      if (!sweep_key.empty()) throw ConfigError("config: [sweep] must contain exactly one parameter");
      sweep_key = key;
      std::stringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        const std::string v = detail::trim(item);
        if (!v.empty()) c.sweep_values.push_back(parse_number(key, v));
      }
      continue;
    }

    if (key == "experiment") c.experiment = detail::parse_experiment(value);
    else if (key == "d") c.d = parse_count(key, value);
    else if (key == "T") c.T = parse_count(key, value);
    else if (key == "N") c.N = parse_count(key, value);
    else if (key == "R") c.R = parse_number(key, value);
    else if (key == "S") c.S = parse_number(key, value);
    else if (key == "L") c.L = parse_number(key, value);
    else if (key == "lambda") c.lambda = parse_number(key, value);
    else if (key == "delta") c.delta = parse_number(key, value);
    else if (key == "alpha") c.alpha = parse_number(key, value);
    else if (key == "topology") c.topology = parse_topology(value);
    else if (key == "k") c.k = parse_count(key, value);
    else if (key == "p") c.p = parse_number(key, value);
    else if (key == "n_seeds") c.n_seeds = parse_count(key, value);
    else if (key == "seed") c.seed = parse_count(key, value);
    else if (key == "action_count") c.action_count = parse_count(key, value);
    else if (key == "baseline_schedule") c.baseline_schedule = parse_baseline_schedule(value);
    else if (key == "baseline_fraction") c.baseline_fraction = parse_number(key, value);
    else if (key == "baseline_spread") c.baseline_spread = parse_number(key, value);
    else if (key == "theta_norm") c.theta_norm = parse_number(key, value);
    else if (key == "write_raw") c.write_raw = detail::parse_bool(key, value);
    else if (key == "output_dir") c.output_dir = value;
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  if (!sweep_key.empty() && sweep_key != "values" && sweep_key != sweep_parameter(c.experiment)) {
    throw ConfigError("config: [sweep] parameter '" + sweep_key + "' does not match experiment '" +
                      std::string(to_string(c.experiment)) + "' (expected '" +
                      std::string(sweep_parameter(c.experiment)) + "')");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Canonical text form; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "experiment = " << to_string(c.experiment) << '\n'
    << "d = " << c.d << '\n' << "T = " << c.T << '\n' << "N = " << c.N << '\n'
    << "R = " << c.R << '\n' << "S = " << c.S << '\n' << "L = " << c.L << '\n'
    << "lambda = " << c.lambda << '\n' << "delta = " << c.delta << '\n' << "alpha = " << c.alpha << '\n'
    << "topology = " << to_string(c.topology) << '\n';
  if (c.k) o << "k = " << *c.k << '\n';
  if (c.p) o << "p = " << *c.p << '\n';
  o << "n_seeds = " << c.n_seeds << '\n' << "seed = " << c.seed << '\n'
    << "action_count = " << c.action_count << '\n'
    << "baseline_schedule = " << to_string(c.baseline_schedule) << '\n'
    << "baseline_fraction = " << c.baseline_fraction << '\n'
    << "baseline_spread = " << c.baseline_spread << '\n'
    << "theta_norm = " << c.theta_norm << '\n'
    << "write_raw = " << (c.write_raw ? "true" : "false") << '\n'
    << "output_dir = " << c.output_dir << '\n';
  if (!c.sweep_values.empty()) {
    o << "\n[sweep]\n" << sweep_parameter(c.experiment) << " = ";
    for (std::size_t i = 0; i < c.sweep_values.size(); ++i) o << (i ? ", " : "") << c.sweep_values[i];
    o << '\n';
  }
  return o.str();
}

/// One concrete simulation setting inside an experiment.
struct RunSpec {
  std::size_t config_id = 0;
  double sweep_value = 0.0;
  std::size_t n_agents = 0;
  TopologyKind topology = TopologyKind::complete;
  std::optional<std::size_t> k;
  std::optional<double> p;
  InstanceOptions instance;
  SimulationConfig simulation;
};

inline std::vector<RunSpec> expand(const ExperimentConfig& c) {
  validate(c);
  auto base = [&](std::size_t id) {
    RunSpec r;
    r.config_id = id;
    r.n_agents = c.N;
    r.topology = c.topology;
    r.k = c.k;
    r.p = c.p;
    r.instance.dim = c.d;
    r.instance.n_agents = c.N;
    r.instance.action_count = c.action_count;
    r.instance.alpha = c.alpha;
    r.instance.noise_r = c.R;
    r.instance.horizon = c.T;
    r.instance.bound_s = c.S;
    r.instance.bound_l = c.L;
    r.instance.theta_norm = c.theta_norm;
    r.instance.baseline_fraction = c.baseline_fraction;
    r.instance.baseline_spread = c.baseline_spread;
    r.instance.baseline_schedule = c.baseline_schedule;
    r.simulation.horizon = c.T;
    r.simulation.reg = c.lambda;
    r.simulation.delta = c.delta;
    return r;
  };
  std::vector<RunSpec> out;
  if (c.experiment == ExperimentKind::single) {
    out.push_back(base(0));
    return out;
  }
  for (std::size_t i = 0; i < c.sweep_values.size(); ++i) {
    RunSpec r = base(i);
    const double v = c.sweep_values[i];
    r.sweep_value = v;
    switch (c.experiment) {
      case ExperimentKind::connectivity_sweep:
        r.topology = TopologyKind::k_regular;
        r.k = static_cast<std::size_t>(v);
        break;
      case ExperimentKind::alpha_sweep:
        r.instance.alpha = v;
        break;
      case ExperimentKind::n_scaling:
        r.n_agents = static_cast<std::size_t>(v);
        r.instance.n_agents = r.n_agents;
        break;
      case ExperimentKind::single:
        break;
    }
    out.push_back(r);
  }
  return out;
}

// Seed of the i-th run of an ensemble.
inline std::uint64_t run_seed(std::uint64_t master_seed, std::size_t index) { return master_seed + index; }

}  // namespace masclucb
