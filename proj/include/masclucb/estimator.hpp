#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "masclucb/errors.hpp"

namespace masclucb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Full re-inversion cadence for the incrementally maintained inverse.
constexpr std::size_t kReinvertEvery = 512;

/// Regularized Gram matrix lambda I + sum_k x_k x_k^T and its inverse.
///
/// Shared by all agents: every agent sees the same action sequence, only the
/// reward estimates differ.
class GramMatrix {
 public:
  GramMatrix(std::size_t dim, double reg) : reg_(reg) {
    if (dim == 0) throw ValidationError("GramMatrix: dimension must be positive");
    if (!(reg > 0.0)) throw ValidationError("GramMatrix: regularization must be positive");
    const auto d = static_cast<Eigen::Index>(dim);
    sigma_ = reg * Matrix::Identity(d, d);
    sigma_inv_ = (1.0 / reg) * Matrix::Identity(d, d);
  }

  void add(const Vector& x) {
    if (x.size() != sigma_.rows()) throw ValidationError("GramMatrix::add: dimension mismatch");
    sigma_.noalias() += x * x.transpose();
    ++count_;
    if (count_ % kReinvertEvery == 0) {
      sigma_inv_ = sigma_.ldlt().solve(Matrix::Identity(sigma_.rows(), sigma_.cols()));
    } else {
      // Sherman-Morrison rank-1 update.
      const Vector u = sigma_inv_ * x;
      sigma_inv_.noalias() -= (u * u.transpose()) / (1.0 + x.dot(u));
    }
  }

  const Matrix& sigma() const { return sigma_; }
  const Matrix& sigma_inv() const { return sigma_inv_; }
  std::size_t episode_count() const { return count_; }
  double reg() const { return reg_; }
  std::size_t dim() const { return static_cast<std::size_t>(sigma_.rows()); }

 private:
  Matrix sigma_;
  Matrix sigma_inv_;
  std::size_t count_ = 0;
  double reg_;
};

inline GramMatrix update_gram(GramMatrix gram, const Vector& action) {
  gram.add(action);
  return gram;
}

/// Sigma^{-1} sum_k x_k y_k.
inline Vector rls_estimate(const GramMatrix& gram, std::span<const Vector> actions, std::span<const double> y) {
  if (actions.size() != y.size() || actions.size() != gram.episode_count()) {
    throw UsageError("rls_estimate: history lengths must match the Gram episode count");
  }
  Vector moment = Vector::Zero(static_cast<Eigen::Index>(gram.dim()));
  for (std::size_t k = 0; k < actions.size(); ++k) moment += actions[k] * y[k];
  return gram.sigma_inv() * moment;
}

/// ||x||_{Sigma^{-1}}
inline double ellipsoid_norm(const GramMatrix& gram, const Vector& x) {
  const double q = x.dot(gram.sigma_inv() * x);
  return std::sqrt(std::max(q, 0.0));
}

inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

inline double min_eigenvalue(const GramMatrix& gram) { return min_eigenvalue(gram.sigma()); }

struct ConfidenceParams {
  double noise_r = 0.01;
  std::size_t dim = 2;
  double reg = 0.1;
  double bound_s = 1.0;
  double bound_l = 1.0;
  double delta = 0.01;
};

/// Confidence radius after `episodes` episodes for an `n_agents` network.
/// Uses delta/(2N) so the guarantee survives a union bound over agents.
inline double confidence_radius(std::size_t episodes, std::size_t n_agents, const ConfidenceParams& p) {
  if (n_agents == 0) throw ValidationError("confidence_radius: n must be positive");
  if (!(p.reg > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) || p.noise_r < 0.0) {
    throw ValidationError("confidence_radius: need lambda > 0, delta in (0,1), R >= 0");
  }
  const double n = static_cast<double>(n_agents);
  const double delta_conf = p.delta / (2.0 * n);
  const double growth = 1.0 + static_cast<double>(episodes) * p.bound_l * p.bound_l / p.reg;
  const double noise_term =
      (p.noise_r / std::sqrt(n)) * std::sqrt(static_cast<double>(p.dim) * std::log(growth / delta_conf));
  return noise_term + std::sqrt(p.reg) * p.bound_s + p.bound_l / std::sqrt(p.reg);
}

/// Per-agent regularized least-squares state on top of the shared Gram matrix.
///
/// Keeps the moment vectors b_i = sum_k x_k y_k^i so every estimate is one
/// d x d product, plus the raw histories for recomputation checks.
class EstimatorBank {
 public:
  EstimatorBank(std::size_t n_agents, std::size_t dim, double reg)
      : gram_(dim, reg),
        moments_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n_agents))),
        y_history_(n_agents) {}

  void record(const Vector& action, const Vector& consensus_outputs) {
    if (static_cast<std::size_t>(consensus_outputs.size()) != agents()) {
      throw ValidationError("EstimatorBank::record: one consensus output per agent required");
    }
    gram_.add(action);
    actions_.push_back(action);
    moments_.noalias() += action * consensus_outputs.transpose();
    for (std::size_t i = 0; i < agents(); ++i) y_history_[i].push_back(consensus_outputs[static_cast<Eigen::Index>(i)]);
  }

  Vector theta_hat(std::size_t agent) const {
    return gram_.sigma_inv() * moments_.col(static_cast<Eigen::Index>(agent));
  }

  // (1/N) sum_i theta_hat_i
  Vector mean_theta_hat() const { return gram_.sigma_inv() * moments_.rowwise().mean(); }

  // ||theta_hat_i - theta||_{Sigma} for every agent.
  Vector sigma_distances(const Vector& theta) const {
    const Matrix diff = (gram_.sigma_inv() * moments_).colwise() - theta;
    return (diff.array() * (gram_.sigma() * diff).array()).colwise().sum().max(0.0).sqrt().transpose();
  }

  Vector recompute_theta_hat(std::size_t agent) const { return rls_estimate(gram_, actions_, y_history_.at(agent)); }

  const GramMatrix& gram() const { return gram_; }
  const std::vector<Vector>& actions() const { return actions_; }
  const std::vector<double>& y_history(std::size_t agent) const { return y_history_.at(agent); }
  std::size_t agents() const { return y_history_.size(); }
  std::size_t episodes() const { return gram_.episode_count(); }

 private:
  GramMatrix gram_;
  Matrix moments_;
  std::vector<Vector> actions_;
  std::vector<std::vector<double>> y_history_;
};

}  // namespace masclucb
