#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "masclucb/config.hpp"
#include "masclucb/graph.hpp"
#include "masclucb/simulator.hpp"
#include "masclucb/trace_csv.hpp"

namespace masclucb {

inline std::size_t default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(0..count-1) on up to `jobs` threads. Items are claimed in index
/// order; the first exception (by index) is rethrown after all threads join.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  jobs = std::max<std::size_t>(1, std::min(jobs == 0 ? default_jobs() : jobs, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Number of completed episodes M and the final communication length q(M)
/// when a run of T rounds follows the schedule (the action round plus q(s)
/// communication rounds per episode).
struct EpisodePlan {
  std::size_t completed = 0;
  std::size_t last_comm_rounds = 0;
  bool truncated_tail = false;
};

inline EpisodePlan plan_episodes(std::size_t horizon, std::size_t n, double lambda2) {
  EpisodePlan plan;
  std::size_t t = 1;
  for (std::size_t s = 1; t <= horizon; ++s) {
    const std::size_t q = comm_schedule(s, n, lambda2);
    if (t + q > horizon) {
      plan.truncated_tail = true;
      break;
    }
    plan.completed = s;
    plan.last_comm_rounds = q;
    t += q + 1;
  }
  return plan;
}

inline BoundInputs bound_inputs(const SimulationConfig& sim, const BanditInstance& inst) {
  return {inst.dim, sim.reg, sim.delta, inst.alpha, inst.constants};
}

/// Final-round facts of one run.
struct RunOutcome {
  std::size_t config_id = 0;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  double lambda2 = 0.0;
  double final_cum_regret = 0.0;
  double final_est_error = 0.0;
  std::optional<std::size_t> first_ucb_episode;
  std::size_t conservative_episodes = 0;
  std::size_t episodes_completed = 0;
  std::size_t unsafe_rounds = 0;
  TheoreticalBounds bounds;
};

struct PreparedRun {
  BanditInstance instance;
  NetworkGraph graph;
};

inline PreparedRun prepare_run(const RunSpec& spec, std::uint64_t seed) {
  BanditInstance inst = generate_instance(spec.instance, seed);
  NetworkGraph graph = build_topology(spec.topology, spec.n_agents, spec.k, spec.p, seed);
  return {std::move(inst), std::move(graph)};
}

inline RunOutcome summarize_run(const RunSpec& spec, std::size_t seed_index, std::uint64_t seed,
                                const BanditInstance& inst, const NetworkGraph& graph, const RunTrace& trace) {
  RunOutcome o;
  o.config_id = spec.config_id;
  o.seed_index = seed_index;
  o.seed = seed;
  o.lambda2 = graph.lambda2_abs();
  o.final_cum_regret = trace.final_cum_regret;
  o.final_est_error = trace.final_est_error;
  o.first_ucb_episode = trace.first_ucb_episode;
  o.conservative_episodes = trace.conservative_episode_count;
  o.episodes_completed = trace.episodes_completed;
  o.unsafe_rounds = trace.unsafe_rounds;
  o.bounds = theoretical_bounds(bound_inputs(spec.simulation, inst), trace.beta_final, trace.episodes_completed,
                                trace.comm_rounds_final);
  return o;
}

// Per-round metrics that get averaged over seeds, in aggregate column order.
inline constexpr const char* kAggregateMetrics[] = {"inst_regret", "cum_regret", "expected_reward",
                                                    "safety_threshold", "est_error"};
inline constexpr std::size_t kMetricCount = 5;

/// Welford accumulator over runs for every (round, metric).
class CurveAccumulator {
 public:
  explicit CurveAccumulator(std::size_t rounds) : mean_(rounds * kMetricCount, 0.0), m2_(rounds * kMetricCount, 0.0) {}

  void add(const RunTrace& trace) {
    if (trace.records.size() * kMetricCount != mean_.size()) {
      throw std::runtime_error("aggregate: run trace length differs from the horizon");
    }
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t r = 0; r < trace.records.size(); ++r) {
      const auto& rec = trace.records[r];
      const double values[kMetricCount] = {rec.inst_regret, rec.cum_regret, rec.expected_reward, rec.safety_threshold,
                                           rec.est_error};
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        const std::size_t idx = r * kMetricCount + m;
        const double delta = values[m] - mean_[idx];
        mean_[idx] += delta / n;
        m2_[idx] += delta * (values[m] - mean_[idx]);
      }
    }
  }

  std::size_t count() const { return count_; }
  std::size_t rounds() const { return mean_.size() / kMetricCount; }
  double mean(std::size_t round_index, std::size_t metric) const { return mean_[round_index * kMetricCount + metric]; }
  double stderr_of(std::size_t round_index, std::size_t metric) const {
    if (count_ < 2) return 0.0;
    const double n = static_cast<double>(count_);
    return std::sqrt(m2_[round_index * kMetricCount + metric] / (n - 1.0) / n);
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::size_t count_ = 0;
};

struct ConfigResult {
  RunSpec spec;
  std::vector<RunOutcome> runs;  // seed order
  std::optional<CurveAccumulator> curves;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ConfigResult> configs;
  std::vector<std::filesystem::path> files;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_seeds;
  std::optional<std::string> output_dir;
  std::size_t jobs = 0;  // 0 = all cores
  bool quiet = true;
  bool write_files = true;
  std::ostream* log = nullptr;
};

inline ExperimentConfig apply_overrides(ExperimentConfig c, const RunOptions& opt) {
  if (opt.seed) c.seed = *opt.seed;
  if (opt.n_seeds) c.n_seeds = *opt.n_seeds;
  if (opt.output_dir) c.output_dir = *opt.output_dir;
  return c;
}

inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_stderr(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

inline std::string raw_csv_name(std::size_t config_id, std::uint64_t seed) {
  return "run_c" + std::to_string(config_id) + "_s" + std::to_string(seed) + ".csv";
}

inline void write_aggregate_csv(std::ostream& os, const ExperimentResult& res) {
  os << "config_id,sweep_value,n_seeds,round";
  for (const char* m : kAggregateMetrics) os << ",mean_" << m << ",stderr_" << m;
  os << '\n';
  for (const auto& cr : res.configs) {
    if (!cr.curves) continue;
    const auto& acc = *cr.curves;
    const std::string prefix = std::to_string(cr.spec.config_id) + ',' + format_double(cr.spec.sweep_value) + ',' +
                               std::to_string(acc.count()) + ',';
    for (std::size_t r = 0; r < acc.rounds(); ++r) {
      os << prefix << (r + 1);
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        os << ',' << format_double(acc.mean(r, m)) << ',' << format_double(acc.stderr_of(r, m));
      }
      os << '\n';
    }
  }
}

inline void write_summary_csv(std::ostream& os, const ExperimentResult& res) {
  os << "config_id,sweep_param,sweep_value,n_seeds,mean_lambda2,mean_final_cum_regret,stderr_final_cum_regret,"
        "mean_final_est_error,stderr_final_est_error,runs_reaching_ucb,mean_first_ucb_episode,"
        "mean_conservative_episodes,mean_episodes_completed,runs_with_unsafe_rounds,mean_regret_bound,"
        "runs_within_regret_bound,runs_within_cons_bound\n";
  const std::string param(sweep_parameter(res.config.experiment));
  for (const auto& cr : res.configs) {
    std::vector<double> l2, regret, est, first, cons, eps, bound;
    std::size_t unsafe = 0, within_regret = 0, within_cons = 0;
    for (const auto& r : cr.runs) {
      l2.push_back(r.lambda2);
      regret.push_back(r.final_cum_regret);
      est.push_back(r.final_est_error);
      if (r.first_ucb_episode) first.push_back(static_cast<double>(*r.first_ucb_episode));
      cons.push_back(static_cast<double>(r.conservative_episodes));
      eps.push_back(static_cast<double>(r.episodes_completed));
      bound.push_back(r.bounds.regret_bound);
      if (r.unsafe_rounds > 0) ++unsafe;
      if (r.final_cum_regret <= r.bounds.regret_bound) ++within_regret;
      if (static_cast<double>(r.conservative_episodes) <= r.bounds.cons_count_bound) ++within_cons;
    }
    os << cr.spec.config_id << ',' << param << ',' << format_double(cr.spec.sweep_value) << ',' << cr.runs.size()
       << ',' << format_double(sample_mean(l2)) << ',' << format_double(sample_mean(regret)) << ','
       << format_double(sample_stderr(regret)) << ',' << format_double(sample_mean(est)) << ','
       << format_double(sample_stderr(est)) << ',' << first.size() << ','
       << (first.empty() ? std::string() : format_double(sample_mean(first))) << ','
       << format_double(sample_mean(cons)) << ',' << format_double(sample_mean(eps)) << ',' << unsafe << ','
       << format_double(sample_mean(bound)) << ',' << within_regret << ',' << within_cons << '\n';
  }
}

/// Runs every (configuration, seed) pair. Runs fan out over `jobs` threads;
/// curves are folded in (config, seed) order by whichever thread finishes
/// the next pending run, so outputs do not depend on the thread count.
inline ExperimentResult run_experiment(const ExperimentConfig& base, const RunOptions& opt = {}) {
  ExperimentResult res;
  res.config = apply_overrides(base, opt);
  const ExperimentConfig& cfg = res.config;
  const std::vector<RunSpec> specs = expand(cfg);
  const std::size_t seeds = cfg.n_seeds;

  namespace fs = std::filesystem;
  const fs::path out_dir = cfg.output_dir;
  const fs::path raw_dir = out_dir / "raw";
  if (opt.write_files) {
    fs::create_directories(out_dir);
    if (cfg.write_raw) fs::create_directories(raw_dir);
  }

  res.configs.resize(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    res.configs[c].spec = specs[c];
    res.configs[c].runs.resize(seeds);
    res.configs[c].curves.emplace(cfg.T);
  }

  const std::size_t total = specs.size() * seeds;
  std::vector<std::optional<RunTrace>> pending(total);
  std::size_t next_fold = 0;
  std::mutex fold_mutex;

  parallel_for(total, opt.jobs, [&](std::size_t job) {
    const std::size_t c = job / seeds;
    const std::size_t i = job % seeds;
    const RunSpec& spec = specs[c];
    const std::uint64_t seed = run_seed(cfg.seed, i);
    const PreparedRun prep = prepare_run(spec, seed);
    RunTrace trace = run(spec.simulation, prep.instance, prep.graph, seed);
    res.configs[c].runs[i] = summarize_run(spec, i, seed, prep.instance, prep.graph, trace);
    if (opt.write_files && cfg.write_raw) {
      std::ofstream f(raw_dir / raw_csv_name(spec.config_id, seed), std::ios::binary);
      write_trace_csv(f, trace);
      if (!f) throw std::runtime_error("failed to write raw CSV for seed " + std::to_string(seed));
    }
    trace.episodes.clear();
    trace.episodes.shrink_to_fit();

    std::lock_guard<std::mutex> lock(fold_mutex);
    pending[job] = std::move(trace);
    while (next_fold < total && pending[next_fold]) {
      res.configs[next_fold / seeds].curves->add(*pending[next_fold]);
      pending[next_fold].reset();
      ++next_fold;
    }
    if (!opt.quiet && opt.log) {
      const auto& o = res.configs[c].runs[i];
      *opt.log << "config " << c << " seed " << seed << ": regret " << format_double(o.final_cum_regret)
               << ", est_error " << format_double(o.final_est_error) << ", unsafe rounds " << o.unsafe_rounds
               << '\n';
    }
  });

  if (opt.write_files) {
    if (cfg.write_raw) {
      for (const auto& cr : res.configs) {
        for (const auto& r : cr.runs) res.files.push_back(raw_dir / raw_csv_name(cr.spec.config_id, r.seed));
      }
    }
    {
      std::ofstream f(out_dir / "aggregate.csv", std::ios::binary);
      write_aggregate_csv(f, res);
      if (!f) throw std::runtime_error("failed to write aggregate.csv");
    }
    {
      std::ofstream f(out_dir / "summary.csv", std::ios::binary);
      write_summary_csv(f, res);
      if (!f) throw std::runtime_error("failed to write summary.csv");
    }
    res.files.push_back(out_dir / "aggregate.csv");
    res.files.push_back(out_dir / "summary.csv");
  }
  return res;
}

}  // namespace masclucb
