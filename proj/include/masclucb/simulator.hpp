#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "masclucb/consensus.hpp"
#include "masclucb/environment.hpp"
#include "masclucb/errors.hpp"
#include "masclucb/estimator.hpp"
#include "masclucb/graph.hpp"
#include "masclucb/policy.hpp"
#include "masclucb/rng.hpp"

namespace masclucb {

enum class Phase { action, communication };
enum class EpisodeType { ucb, conservative };

inline const char* to_string(Phase p) { return p == Phase::action ? "action" : "communication"; }
inline const char* to_string(EpisodeType e) { return e == EpisodeType::ucb ? "ucb" : "conservative"; }

constexpr std::size_t kNoActionIndex = std::numeric_limits<std::size_t>::max();

struct RoundRecord {
  std::size_t round_t = 0;
  std::size_t episode_s = 0;
  Phase phase = Phase::action;
  EpisodeType episode_type = EpisodeType::conservative;
  std::size_t action_index = kNoActionIndex;  // set for UCB episodes
  Vector action;
  double inst_regret = 0.0;
  double cum_regret = 0.0;
  double expected_reward = 0.0;
  double safety_threshold = 0.0;
  double est_error = 0.0;
};

/// What the selecting agent saw and did at the start of one episode, plus
/// oracle checks that need the hidden parameter.
struct EpisodeDiagnostics {
  std::size_t episode_s = 0;
  std::size_t start_round = 0;
  std::size_t comm_rounds = 0;
  std::size_t selected_agent = 0;
  EpisodeType type = EpisodeType::conservative;
  std::size_t action_index = kNoActionIndex;
  double beta_prev = 0.0;
  double excitation_threshold = 0.0;
  double lambda_min_prev = 0.0;
  std::size_t safe_set_size = 0;
  bool optimal_in_safe_set = false;
  double chosen_ucb_value = 0.0;
  bool confidence_valid_selected = false;  // theta_global in E^{a(s)}_{s-1}
  bool confidence_valid_all = false;       // ... for every agent
  double safety_margin = 0.0;              // of the played action at the start round
  bool truncated = false;
};

struct RunTrace {
  std::vector<RoundRecord> records;
  std::vector<EpisodeDiagnostics> episodes;
  std::size_t episodes_completed = 0;
  std::size_t conservative_episode_count = 0;
  std::optional<std::size_t> first_ucb_episode;
  std::size_t rounds_played = 0;
  std::size_t unsafe_rounds = 0;
  double final_cum_regret = 0.0;
  double final_est_error = 0.0;
  double beta_final = 0.0;  // beta_M
  std::size_t comm_rounds_final = 0;  // q(M)
  std::uint64_t config_fingerprint = 0;
};

struct SimulationConfig {
  std::size_t horizon = 20000;
  double reg = 0.1;
  double delta = 0.01;
  bool record_rounds = true;
  // Re-derive the estimator from raw histories every this many episodes and
  // throw on drift; 0 disables.
  std::size_t invariant_check_every = 0;
};

struct RunStreams {
  Rng agent_selection;
  Rng noise;
  Rng zeta;

  static RunStreams from_seed(std::uint64_t seed) {
    return {make_stream(seed, Stream::agent_selection), make_stream(seed, Stream::noise),
            make_stream(seed, Stream::zeta)};
  }
};

inline ConfidenceParams confidence_params(const SimulationConfig& cfg, const BanditInstance& inst) {
  return {inst.noise_r, inst.dim, cfg.reg, inst.constants.bound_s, inst.constants.bound_l, cfg.delta};
}

/// Throws if the incrementally maintained estimator drifted from a rebuild.
inline void verify_estimator_invariants(const EstimatorBank& bank) {
  const auto& gram = bank.gram();
  const auto d = static_cast<Eigen::Index>(gram.dim());
  Matrix rebuilt = gram.reg() * Matrix::Identity(d, d);
  for (const auto& x : bank.actions()) rebuilt += x * x.transpose();
  if ((rebuilt - gram.sigma()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, rebuilt.cwiseAbs().maxCoeff())) {
    throw std::runtime_error("estimator invariant: Gram matrix drifted from rebuild");
  }
  if ((gram.sigma() * gram.sigma_inv() - Matrix::Identity(d, d)).norm() > 1e-8) {
    throw std::runtime_error("estimator invariant: Sigma * Sigma^-1 != I");
  }
  if (min_eigenvalue(gram) < gram.reg() * (1.0 - 1e-12)) {
    throw std::runtime_error("estimator invariant: lambda_min(Sigma) < lambda");
  }
  for (std::size_t i = 0; i < bank.agents(); ++i) {
    if ((bank.theta_hat(i) - bank.recompute_theta_hat(i)).norm() > 1e-9) {
      throw std::runtime_error("estimator invariant: theta_hat differs from recomputation");
    }
  }
}

/// Mutable state of one MA-SCLUCB run.
class Simulator {
 public:
  Simulator(const BanditInstance& instance, const NetworkGraph& graph, SimulationConfig config, std::uint64_t seed)
      : inst_(instance),
        graph_(graph),
        cfg_(config),
        streams_(RunStreams::from_seed(seed)),
        bank_(instance.n_agents, instance.dim, config.reg),
        conf_(confidence_params(config, instance)),
        cons_spec_(make_conservative_spec(instance.alpha, instance.constants.r_l, instance.constants.bound_s,
                                          instance.constants.r_h, instance.dim)) {
    if (graph.size() != instance.n_agents) throw ConfigError("graph size does not match the instance's agent count");
    if (cfg_.horizon < 1) throw ConfigError("horizon T must be >= 1");
    if (cfg_.horizon > inst_.horizon()) throw ConfigError("instance horizon shorter than T");
  }

  bool finished() const { return finished_ || t_ > cfg_.horizon; }
  std::size_t next_round() const { return t_; }
  std::size_t next_episode() const { return s_; }
  const EstimatorBank& estimator() const { return bank_; }
  const RunTrace& trace() const { return trace_; }
  RunTrace take_trace() { return std::move(trace_); }

  /// Plays one episode: action round, then q(s) communication rounds, then
  /// the estimator update. When the communication phase would overrun the
  /// horizon the action is held until T and the run ends without an update.
  void run_episode() {
    if (finished()) throw UsageError("run_episode: horizon exhausted");
    const std::size_t n = inst_.n_agents;
    const std::size_t t_s = t_;
    const std::size_t s = s_;
    const std::size_t q = comm_schedule(s, n, graph_.lambda2_abs());

    EpisodeDiagnostics diag;
    diag.episode_s = s;
    diag.start_round = t_s;
    diag.comm_rounds = q;
    diag.selected_agent = std::uniform_int_distribution<std::size_t>(0, n - 1)(streams_.agent_selection);

    const std::size_t a = diag.selected_agent;
    const double beta = confidence_radius(s - 1, n, conf_);
    const Vector theta_hat = bank_.theta_hat(a);
    const double r_b = inst_.baseline_reward(t_s);
    const SafeSetView safe = compute_safe_set(inst_.action_set, theta_hat, bank_.gram(), beta, inst_.alpha, r_b);
    diag.beta_prev = beta;
    diag.excitation_threshold = excitation_threshold(beta, inst_.constants.bound_l, inst_.constants.kappa_l,
                                                     inst_.alpha, inst_.constants.r_l);
    diag.lambda_min_prev = min_eigenvalue(bank_.gram());
    diag.safe_set_size = safe.safe_actions.size();
    diag.optimal_in_safe_set = safe.contains(inst_.optimal_index);
    const Vector distances = bank_.sigma_distances(inst_.global_theta);
    diag.confidence_valid_selected = distances[static_cast<Eigen::Index>(a)] <= beta;
    diag.confidence_valid_all = distances.maxCoeff() <= beta;

    Vector action;
    if (!safe.empty() && diag.lambda_min_prev >= diag.excitation_threshold) {
      const std::size_t idx = *select_ucb_action(safe, inst_.action_set, theta_hat);
      diag.type = EpisodeType::ucb;
      diag.action_index = idx;
      diag.chosen_ucb_value = inst_.action_set[idx].dot(theta_hat) + safe.bonus_values[idx];
      action = inst_.action_set[idx];
      if (!trace_.first_ucb_episode) trace_.first_ucb_episode = s;
    } else {
      diag.type = EpisodeType::conservative;
      action = conservative_action(cons_spec_, inst_.baseline_action(t_s), streams_.zeta);
    }
    diag.safety_margin = safety_margin(inst_, action, t_s);

    const Vector rewards = observe_rewards(inst_, action, streams_.noise);
    const double est_before = (bank_.mean_theta_hat() - inst_.global_theta).norm();

    const std::size_t first_record = trace_.records.size();
    log_round(t_s, s, Phase::action, diag, action, est_before);

    if (t_s + q > cfg_.horizon) {
      // Not enough time to finish communicating: the reward is never folded
      // into the estimator, but the network keeps playing the action through T.
      diag.truncated = true;
      for (std::size_t t = t_s + 1; t <= cfg_.horizon; ++t) log_round(t, s, Phase::communication, diag, action, est_before);
      trace_.episodes.push_back(diag);
      finished_ = true;
      t_ = cfg_.horizon + 1;
      return;
    }

    for (std::size_t h = 1; h <= q; ++h) log_round(t_s + h, s, Phase::communication, diag, action, est_before);

    const ConsensusResult consensus = run_consensus(rewards, graph_, q);
    bank_.record(action, consensus.estimates);
    const double est_after = (bank_.mean_theta_hat() - inst_.global_theta).norm();
    trace_.final_est_error = est_after;
    if (cfg_.record_rounds && trace_.records.size() > first_record) trace_.records.back().est_error = est_after;

    ++trace_.episodes_completed;
    if (diag.type == EpisodeType::conservative) ++trace_.conservative_episode_count;
    trace_.beta_final = confidence_radius(s, n, conf_);
    trace_.comm_rounds_final = q;
    trace_.episodes.push_back(diag);

    if (cfg_.invariant_check_every > 0 && s % cfg_.invariant_check_every == 0) verify_estimator_invariants(bank_);

    t_ = t_s + q + 1;
    ++s_;
  }

  RunTrace run() {
    while (!finished()) run_episode();
    return take_trace();
  }

 private:
  void log_round(std::size_t t, std::size_t s, Phase phase, const EpisodeDiagnostics& diag, const Vector& action,
                 double est_error) {
    const double regret = instantaneous_regret(inst_, action);
    const double threshold = (1.0 - inst_.alpha) * inst_.baseline_reward(t);
    const double reward = inst_.expected_reward(action);
    cum_regret_ += regret;
    ++trace_.rounds_played;
    trace_.final_cum_regret = cum_regret_;
    if (reward < threshold) ++trace_.unsafe_rounds;
    if (!cfg_.record_rounds) return;
    RoundRecord rec;
    rec.round_t = t;
    rec.episode_s = s;
    rec.phase = phase;
    rec.episode_type = diag.type;
    rec.action_index = diag.action_index;
    rec.action = action;
    rec.inst_regret = regret;
    rec.cum_regret = cum_regret_;
    rec.expected_reward = reward;
    rec.safety_threshold = threshold;
    rec.est_error = est_error;
    trace_.records.push_back(std::move(rec));
  }

  const BanditInstance& inst_;
  const NetworkGraph& graph_;
  SimulationConfig cfg_;
  RunStreams streams_;
  EstimatorBank bank_;
  ConfidenceParams conf_;
  ConservativeActionSpec cons_spec_;
  RunTrace trace_;
  std::size_t t_ = 1;
  std::size_t s_ = 1;
  double cum_regret_ = 0.0;
  bool finished_ = false;
};

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Full run. Deterministic given (config, instance, graph, seed).
inline RunTrace run(const SimulationConfig& config, const BanditInstance& instance, const NetworkGraph& graph,
                    std::uint64_t seed) {
  Simulator sim(instance, graph, config, seed);
  RunTrace trace = sim.run();
  std::ostringstream key;
  key.precision(17);
  key << "T=" << config.horizon << ";lambda=" << config.reg << ";delta=" << config.delta << ";N=" << instance.n_agents
      << ";d=" << instance.dim << ";alpha=" << instance.alpha << ";R=" << instance.noise_r
      << ";l2=" << graph.lambda2_abs() << ";seed=" << seed;
  trace.config_fingerprint = fnv1a(key.str());
  return trace;
}

// --- theoretical bounds ------------------------------------------------------

struct BoundInputs {
  std::size_t dim = 2;
  double reg = 0.1;
  double delta = 0.01;
  double alpha = 0.2;
  AssumptionConstants constants;
};

struct TheoreticalBounds {
  double regret_bound = 0.0;
  double cons_count_bound = 0.0;
  double rho = 0.0;
  double h1 = 0.0;
  double sigma_zeta = 0.0;
};

/// Evaluates the high-probability regret bound and the bound on the number
/// of conservative episodes for M completed episodes with radius beta_M and
/// final communication length q(M).
inline TheoreticalBounds theoretical_bounds(const BoundInputs& in, double beta_m, std::size_t episodes_m,
                                            std::size_t q_m) {
  const auto& c = in.constants;
  TheoreticalBounds b;
  b.rho = in.alpha * c.r_l / (c.bound_s + c.r_h);
  b.h1 = 2.0 * b.rho * (1.0 - b.rho) * c.bound_l + 2.0 * b.rho * b.rho;
  b.sigma_zeta = 1.0 / std::sqrt(static_cast<double>(in.dim));

  const double gap = c.kappa_l + in.alpha * c.r_l;
  const double rs = b.rho * b.sigma_zeta;
  const double log_term = std::log(static_cast<double>(in.dim) / (in.delta / 2.0));
  const double lead = 2.0 * c.bound_l * beta_m / (rs * gap);
  b.cons_count_bound = lead * lead + 2.0 * b.h1 * b.h1 / (rs * rs * rs * rs) * log_term +
                       2.0 * c.bound_l * b.h1 * beta_m / (rs * rs * rs * gap) * std::sqrt(8.0 * log_term);

  const double m = static_cast<double>(episodes_m);
  const double d = static_cast<double>(in.dim);
  const double ucb_part =
      2.0 * beta_m * std::sqrt(2.0 * d * m * std::log(1.0 + m * c.bound_l * c.bound_l / (in.reg * d)));
  const double cons_part = b.cons_count_bound * (c.kappa_h + b.rho * (c.r_h + c.bound_s));
  b.regret_bound = (1.0 + static_cast<double>(q_m)) * (ucb_part + cons_part);
  return b;
}

}  // namespace masclucb
