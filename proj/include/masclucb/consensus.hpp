#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>

#include "masclucb/errors.hpp"
#include "masclucb/graph.hpp"

namespace masclucb {

// Below this |lambda2| the graph mixes in one plain W step (W = J/N on
// complete graphs) and the Chebyshev recurrence would divide by ~0.
constexpr double kNegligibleLambda2 = 1e-12;

/// Number of communication rounds for episode `s`:
/// ceil(ln(2 n s) / sqrt(2 ln(1/|lambda2|))).
inline std::size_t comm_schedule(std::size_t episode, std::size_t n_agents, double lambda2_abs) {
  if (episode < 1) throw ValidationError("comm_schedule: episode index must be >= 1");
  if (n_agents < 1) throw ValidationError("comm_schedule: n must be >= 1");
  if (!(lambda2_abs >= 0.0) || lambda2_abs >= 1.0) {
    throw ValidationError("comm_schedule: |lambda2| must lie in [0, 1), consensus is impossible otherwise");
  }
  if (n_agents == 1) return 0;
  if (lambda2_abs <= kNegligibleLambda2) return 1;
  const double numer = std::log(2.0 * static_cast<double>(n_agents) * static_cast<double>(episode));
  const double denom = std::sqrt(2.0 * std::log(1.0 / lambda2_abs));
  return static_cast<std::size_t>(std::ceil(numer / denom));
}

/// State of the accelerated (Chebyshev) mixing iteration for all agents.
///
/// After h steps agent i holds entry i of T_h(W/|l2|) v / T_h(1/|l2|), where v
/// is the vector passed to `start`. The normalisation keeps constant vectors
/// fixed, and non-consensus modes (|mu| <= |l2|) shrink by 1/T_h(1/|l2|).
struct MixState {
  Eigen::VectorXd current;   // alpha_h
  Eigen::VectorXd previous;  // alpha_{h-1}
  double c_curr = 0.0;       // c_h
  double c_prev = 0.0;       // c_{h-1}
  std::size_t step = 0;      // h
  bool initialized = false;

  static MixState start(const Eigen::VectorXd& initial) {
    MixState st;
    st.current = initial;
    st.previous = Eigen::VectorXd::Zero(initial.size());
    st.c_curr = 0.5;  // c_0 = 1/2 during the first step only
    st.c_prev = 0.0;
    st.step = 0;
    st.initialized = true;
    return st;
  }
};

/// One synchronous communication round. Agent i reads only its own value and
/// its neighbours' values from the previous step.
inline MixState mix_step(const MixState& state, const NetworkGraph& graph) {
  if (!state.initialized) throw UsageError("mix_step: state not initialized (call MixState::start)");
  const double l2 = graph.lambda2_abs();
  if (!(l2 > 0.0)) throw ValidationError("mix_step: requires |lambda2| > 0");
  if (static_cast<std::size_t>(state.current.size()) != graph.size()) {
    throw ValidationError("mix_step: state size does not match graph");
  }

  // z_h = (2/|l2|) W alpha_h
  const Eigen::VectorXd z = (2.0 / l2) * graph.apply(state.current);
  const double c_next = 2.0 * state.c_curr / l2 - state.c_prev;

  MixState next;
  next.initialized = true;
  next.step = state.step + 1;
  if (state.step == 0) {
    // First step: alpha_1 = (c_0/c_1) z_0 with c_0 = 1/2, i.e. W v. Afterwards
    // c_0 is restored to 1 so the three-term recurrence yields T_h(1/|l2|).
    next.current = (state.c_curr / c_next) * z;
    next.c_prev = 2.0 * state.c_curr;
  } else {
    next.current = (state.c_curr / c_next) * z - (state.c_prev / c_next) * state.previous;
    next.c_prev = state.c_curr;
  }
  next.previous = state.current;
  next.c_curr = c_next;
  return next;
}

struct ConsensusResult {
  Eigen::VectorXd estimates;
  double true_average = 0.0;
  std::size_t rounds_used = 0;
};

/// Runs `rounds` communication rounds starting from the agents' local values.
inline ConsensusResult run_consensus(const Eigen::VectorXd& local_values, const NetworkGraph& graph,
                                     std::size_t rounds) {
  if (static_cast<std::size_t>(local_values.size()) != graph.size()) {
    throw ValidationError("run_consensus: one value per agent required");
  }
  ConsensusResult out;
  out.true_average = local_values.mean();
  out.rounds_used = rounds;
  if (graph.size() == 1 || rounds == 0) {
    out.estimates = local_values;
    return out;
  }
  if (graph.lambda2_abs() <= kNegligibleLambda2) {
    out.estimates = graph.apply(local_values);
    return out;
  }
  MixState st = MixState::start(local_values);
  for (std::size_t h = 0; h < rounds; ++h) st = mix_step(st, graph);
  out.estimates = std::move(st.current);
  return out;
}

}  // namespace masclucb
