#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "masclucb/errors.hpp"
#include "masclucb/estimator.hpp"
#include "masclucb/rng.hpp"

namespace masclucb {

/// Actions whose lower confidence bound clears the conservative threshold.
struct SafeSetView {
  std::vector<std::size_t> safe_actions;
  std::vector<double> lcb_values;    // x' theta_hat - beta ||x||_{Sigma^-1}
  std::vector<double> bonus_values;  // beta ||x||_{Sigma^-1}
  double threshold = 0.0;            // (1 - alpha) r_b

  bool empty() const { return safe_actions.empty(); }
  bool contains(std::size_t index) const {
    return index < lcb_values.size() && lcb_values[index] >= threshold;
  }
};

inline SafeSetView compute_safe_set(std::span<const Vector> actions, const Vector& theta_hat, const GramMatrix& gram,
                                    double beta, double alpha, double baseline_reward) {
  if (beta < 0.0) throw ValidationError("compute_safe_set: beta must be nonnegative");
  SafeSetView view;
  view.threshold = (1.0 - alpha) * baseline_reward;
  view.lcb_values.reserve(actions.size());
  view.bonus_values.reserve(actions.size());
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const double bonus = beta * ellipsoid_norm(gram, actions[a]);
    const double lcb = actions[a].dot(theta_hat) - bonus;
    view.bonus_values.push_back(bonus);
    view.lcb_values.push_back(lcb);
    if (lcb >= view.threshold) view.safe_actions.push_back(a);
  }
  return view;
}

/// Minimum-eigenvalue level of Sigma above which the optimal action is
/// guaranteed to be in every agent's safe set: (2 L beta / (kappa_l + alpha r_l))^2.
inline double excitation_threshold(double beta_prev, double bound_l, double kappa_l, double alpha, double r_l) {
  const double denom = kappa_l + alpha * r_l;
  if (!(denom > 0.0)) throw ConfigError("excitation_threshold: kappa_l + alpha r_l must be positive");
  const double ratio = 2.0 * bound_l * beta_prev / denom;
  return ratio * ratio;
}

/// Optimistic choice within the safe set; ties go to the lowest index.
/// Returns nullopt when the safe set is empty (caller falls back to the
/// conservative action).
inline std::optional<std::size_t> select_ucb_action(const SafeSetView& safe, std::span<const Vector> actions,
                                                    const Vector& theta_hat) {
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (std::size_t a : safe.safe_actions) {
    const double value = actions[a].dot(theta_hat) + safe.bonus_values[a];
    if (!best || value > best_value) {
      best = a;
      best_value = value;
    }
  }
  return best;
}

inline double ucb_value(const Vector& x, const Vector& theta_hat, const GramMatrix& gram, double beta) {
  return x.dot(theta_hat) + beta * ellipsoid_norm(gram, x);
}

struct ConservativeActionSpec {
  double rho = 0.0;         // alpha r_l / (S + r_h)
  double sigma_zeta = 0.0;  // sqrt of lambda_min(Cov(zeta)) for zeta uniform on the sphere
};

inline ConservativeActionSpec make_conservative_spec(double alpha, double r_l, double bound_s, double r_h,
                                                     std::size_t dim) {
  const double denom = bound_s + r_h;
  if (!(denom > 0.0)) throw ConfigError("conservative action: S + r_h must be positive");
  ConservativeActionSpec spec;
  spec.rho = alpha * r_l / denom;
  if (!(spec.rho > 0.0 && spec.rho < 1.0)) throw ConfigError("conservative action: rho must lie in (0,1)");
  spec.sigma_zeta = 1.0 / std::sqrt(static_cast<double>(dim));
  return spec;
}

// Uniform direction on the unit sphere (normalized Gaussian draw).
inline Vector sample_unit_sphere(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector z(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  do {
    for (auto& v : z) v = normal(rng);
    norm = z.norm();
  } while (norm < 1e-12);
  return z / norm;
}

inline Vector conservative_action(const ConservativeActionSpec& spec, const Vector& baseline, const Vector& zeta) {
  return (1.0 - spec.rho) * baseline + spec.rho * zeta;
}

inline Vector conservative_action(const ConservativeActionSpec& spec, const Vector& baseline, Rng& rng) {
  return conservative_action(spec, baseline, sample_unit_sphere(static_cast<std::size_t>(baseline.size()), rng));
}

}  // namespace masclucb
