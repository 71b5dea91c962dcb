#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "masclucb/errors.hpp"
#include "masclucb/estimator.hpp"
#include "masclucb/rng.hpp"

namespace masclucb {

enum class BaselineSchedule { fixed, rotating };

inline std::string_view to_string(BaselineSchedule s) { return s == BaselineSchedule::fixed ? "fixed" : "rotating"; }

inline BaselineSchedule parse_baseline_schedule(std::string_view name) {
  if (name == "fixed") return BaselineSchedule::fixed;
  if (name == "rotating") return BaselineSchedule::rotating;
  throw ConfigError("unknown baseline_schedule '" + std::string(name) + "' (valid: fixed, rotating)");
}

struct AssumptionConstants {
  double kappa_l = 0.0;
  double kappa_h = 0.0;
  double r_l = 0.0;
  double r_h = 0.0;
  double bound_s = 1.0;
  double bound_l = 1.0;
};

// Known constants handed to the learner are the realized extremes widened by
// these factors (lower bounds shrunk, upper bounds grown).
constexpr double kLowerSlack = 0.9;
constexpr double kUpperSlack = 1.1;

/// Ground truth for one bandit problem: local parameters, the finite action
/// set, the per-round baseline and the constants the learner is told.
struct BanditInstance {
  std::size_t dim = 0;
  std::size_t n_agents = 0;
  Matrix local_thetas;  // d x N, column i is theta_i
  Vector global_theta;
  std::vector<Vector> action_set;
  std::vector<Vector> baseline_actions;  // index t-1 for round t
  std::vector<double> baseline_rewards;
  std::size_t optimal_index = 0;
  Vector optimal_action;
  double optimal_reward = 0.0;
  double noise_r = 0.0;
  double alpha = 0.0;
  AssumptionConstants constants;

  std::size_t horizon() const { return baseline_actions.size(); }

  const Vector& baseline_action(std::size_t round_t) const {
    if (round_t < 1 || round_t > horizon()) throw UsageError("baseline_action: round outside instance horizon");
    return baseline_actions[round_t - 1];
  }
  double baseline_reward(std::size_t round_t) const {
    if (round_t < 1 || round_t > horizon()) throw UsageError("baseline_reward: round outside instance horizon");
    return baseline_rewards[round_t - 1];
  }
  double expected_reward(const Vector& x) const { return x.dot(global_theta); }

  double rho() const { return alpha * constants.r_l / (constants.bound_s + constants.r_h); }

  /// Completes an instance from its primitive parts, deriving the global
  /// parameter, the optimum (lowest index on ties), baseline rewards and the
  /// assumption constants.
  static BanditInstance assemble(Matrix local_thetas, std::vector<Vector> action_set,
                                 std::vector<Vector> baseline_actions, double alpha, double noise_r,
                                 double bound_s = 1.0, double bound_l = 1.0) {
    if (local_thetas.cols() < 1) throw ValidationError("instance: need at least one agent");
    if (action_set.empty()) throw ValidationError("instance: empty action set");
    if (baseline_actions.empty()) throw ValidationError("instance: horizon must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("instance: alpha must lie in (0,1)");
    BanditInstance inst;
    inst.dim = static_cast<std::size_t>(local_thetas.rows());
    inst.n_agents = static_cast<std::size_t>(local_thetas.cols());
    inst.global_theta = local_thetas.rowwise().mean();
    inst.local_thetas = std::move(local_thetas);
    inst.action_set = std::move(action_set);
    inst.baseline_actions = std::move(baseline_actions);
    inst.alpha = alpha;
    inst.noise_r = noise_r;

    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < inst.action_set.size(); ++a) {
      const double r = inst.action_set[a].dot(inst.global_theta);
      if (r > best) {
        best = r;
        inst.optimal_index = a;
      }
    }
    inst.optimal_action = inst.action_set[inst.optimal_index];
    inst.optimal_reward = best;

    inst.baseline_rewards.reserve(inst.baseline_actions.size());
    double r_min = std::numeric_limits<double>::infinity(), r_max = -r_min;
    for (const auto& xb : inst.baseline_actions) {
      const double r = xb.dot(inst.global_theta);
      inst.baseline_rewards.push_back(r);
      r_min = std::min(r_min, r);
      r_max = std::max(r_max, r);
    }
    inst.constants.bound_s = bound_s;
    inst.constants.bound_l = bound_l;
    inst.constants.r_l = kLowerSlack * r_min;
    inst.constants.r_h = kUpperSlack * r_max;
    inst.constants.kappa_l = kLowerSlack * (best - r_max);
    inst.constants.kappa_h = kUpperSlack * (best - r_min);
    return inst;
  }
};

struct InstanceOptions {
  std::size_t dim = 2;
  std::size_t n_agents = 100;
  std::size_t action_count = 64;
  double alpha = 0.2;
  double noise_r = 0.01;
  std::size_t horizon = 20000;
  double bound_s = 1.0;
  double bound_l = 1.0;
  double theta_norm = 0.8;
  double baseline_fraction = 0.5;  // r_b / (x*' theta_global)
  double baseline_spread = 0.23;   // norm of the baseline's component orthogonal to theta_global
  BaselineSchedule baseline_schedule = BaselineSchedule::rotating;
};

constexpr std::size_t kMaxRejectionDraws = 1'000'000;

namespace detail {

inline Vector random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(dim));
  do {
    for (auto& x : v) x = normal(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

inline Vector random_in_ball(std::size_t dim, double radius, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
  return r * random_unit(dim, rng);
}

// Unit vector orthogonal to u (u unit). In 2-d this is +-u_perp.
inline Vector random_orthogonal_unit(const Vector& u, Rng& rng) {
  if (u.size() == 2) {
    std::bernoulli_distribution coin(0.5);
    Vector perp(2);
    perp << -u[1], u[0];
    return coin(rng) ? perp : Vector(-perp);
  }
  for (std::size_t i = 0; i < kMaxRejectionDraws; ++i) {
    Vector v = random_unit(static_cast<std::size_t>(u.size()), rng);
    v -= v.dot(u) * u;
    if (v.norm() > 1e-6) return v.normalized();
  }
  throw GenerationError("could not draw an orthogonal direction");
}

}  // namespace detail

/// Draws a random instance satisfying the boundedness and baseline
/// assumptions. Deterministic in `seed`.
inline BanditInstance generate_instance(const InstanceOptions& opt, std::uint64_t seed) {
  if (opt.dim < 1) throw ConfigError("instance: d must be >= 1");
  if (opt.n_agents < 1) throw ConfigError("instance: N must be >= 1");
  if (opt.action_count < 2) throw ConfigError("instance: action_count must be >= 2");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ConfigError("instance: alpha must lie in (0,1)");
  if (opt.horizon < 1) throw ConfigError("instance: horizon must be >= 1");
  if (!(opt.theta_norm > 0.0 && opt.theta_norm <= opt.bound_s && opt.theta_norm <= 1.0 / opt.bound_l)) {
    throw ConfigError("instance: theta_norm must lie in (0, min(S, 1/L)]");
  }
  if (!(opt.baseline_fraction > 0.0 && opt.baseline_fraction < 1.0)) {
    throw ConfigError("instance: baseline_fraction must lie in (0,1)");
  }
  if (opt.baseline_spread < 0.0 ||
      std::hypot(opt.baseline_fraction, opt.baseline_spread) > opt.bound_l) {
    throw ConfigError("instance: baseline action norm exceeds L");
  }
  if (opt.dim == 1 && opt.baseline_spread > 0.0) throw ConfigError("instance: d=1 requires baseline_spread = 0");

  Rng rng = make_stream(seed, Stream::instance);
  const std::size_t d = opt.dim;
  const auto di = static_cast<Eigen::Index>(d);
  const Vector u = detail::random_unit(d, rng);
  const Vector target = opt.theta_norm * u;

  // Local parameters: target plus zero-mean perturbations, shrunk uniformly if
  // re-centering pushed any of them outside the S-ball.
  const double radius = std::min(0.2, opt.bound_s - opt.theta_norm);
  Matrix dev(di, static_cast<Eigen::Index>(opt.n_agents));
  for (std::size_t i = 0; i < opt.n_agents; ++i) {
    dev.col(static_cast<Eigen::Index>(i)) = detail::random_in_ball(d, radius, rng);
  }
  dev.colwise() -= Vector(dev.rowwise().mean());
  double scale = 1.0;
  for (Eigen::Index i = 0; i < dev.cols(); ++i) {
    const double dn = dev.col(i).norm();
    if (dn > 0.0) {
      // largest c with ||target + c dev_i|| <= S
      const double b = target.dot(dev.col(i));
      const double disc = b * b - dn * dn * (target.squaredNorm() - opt.bound_s * opt.bound_s);
      const double cmax = (-b + std::sqrt(std::max(disc, 0.0))) / (dn * dn);
      scale = std::min(scale, 0.999 * cmax);
    }
  }
  Matrix thetas = (dev * scale).colwise() + target;

  const Vector center = opt.baseline_fraction * u;
  Vector fixed_dir;
  if (opt.baseline_schedule == BaselineSchedule::fixed && opt.baseline_spread > 0.0) {
    fixed_dir = detail::random_orthogonal_unit(u, rng);
  }
  const Vector mean_baseline =
      (opt.baseline_schedule == BaselineSchedule::fixed && opt.baseline_spread > 0.0)
          ? Vector(center + opt.baseline_spread * fixed_dir)
          : center;

  std::vector<Vector> actions;
  actions.reserve(opt.action_count + 1);
  if (d == 2) {
    const double phi_u = std::atan2(u[1], u[0]);
    const double step = std::numbers::pi / static_cast<double>(opt.action_count);
    for (std::size_t j = 0; j < opt.action_count; ++j) {
      const double phi = phi_u - std::numbers::pi / 2.0 + (static_cast<double>(j) + 0.5) * step;
      Vector x(2);
      x << std::cos(phi), std::sin(phi);
      actions.push_back(opt.bound_l * x);
    }
  } else {
    const Vector g = thetas.rowwise().mean();
    std::size_t draws = 0;
    while (actions.size() < opt.action_count) {
      if (++draws > kMaxRejectionDraws) {
        throw GenerationError("instance: action-set rejection sampling exceeded " +
                              std::to_string(kMaxRejectionDraws) + " draws");
      }
      Vector x = opt.bound_l * detail::random_unit(d, rng);
      const double r = x.dot(g);
      if (r >= 0.0 && r <= 1.0) actions.push_back(std::move(x));
    }
  }
  actions.push_back(opt.bound_l * mean_baseline.normalized());

  std::vector<Vector> baselines;
  baselines.reserve(opt.horizon);
  for (std::size_t t = 0; t < opt.horizon; ++t) {
    if (opt.baseline_spread == 0.0 || opt.baseline_schedule == BaselineSchedule::fixed) {
      baselines.push_back(mean_baseline);
    } else {
      baselines.push_back(center + opt.baseline_spread * detail::random_orthogonal_unit(u, rng));
    }
  }

  BanditInstance inst = BanditInstance::assemble(std::move(thetas), std::move(actions), std::move(baselines),
                                                 opt.alpha, opt.noise_r, opt.bound_s, opt.bound_l);
  if (inst.optimal_reward < 0.5) throw GenerationError("instance: no action with global reward >= 0.5");
  return inst;
}

/// Noisy local rewards x' theta_i + eta_i, eta_i ~ N(0, R^2) i.i.d.
inline Vector observe_rewards(const BanditInstance& inst, const Vector& action, Rng& rng) {
  Vector r = inst.local_thetas.transpose() * action;
  if (inst.noise_r > 0.0) {
    std::normal_distribution<double> noise(0.0, inst.noise_r);
    for (auto& v : r) v += noise(rng);
  }
  return r;
}

inline double instantaneous_regret(const BanditInstance& inst, const Vector& action) {
  return inst.optimal_reward - action.dot(inst.global_theta);
}

/// x' theta_global - (1 - alpha) r_b,t; nonnegative means round t is safe.
inline double safety_margin(const BanditInstance& inst, const Vector& action, std::size_t round_t) {
  return action.dot(inst.global_theta) - (1.0 - inst.alpha) * inst.baseline_reward(round_t);
}

// --- serialization -----------------------------------------------------------

namespace detail {

inline nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace detail

inline nlohmann::json instance_to_json(const BanditInstance& inst) {
  using nlohmann::json;
  json j;
  j["dim"] = inst.dim;
  j["n_agents"] = inst.n_agents;
  j["alpha"] = inst.alpha;
  j["noise_r"] = inst.noise_r;
  json thetas = json::array();
  for (Eigen::Index i = 0; i < inst.local_thetas.cols(); ++i) thetas.push_back(detail::to_json(inst.local_thetas.col(i)));
  j["local_thetas"] = thetas;
  j["global_theta"] = detail::to_json(inst.global_theta);
  json actions = json::array();
  for (const auto& a : inst.action_set) actions.push_back(detail::to_json(a));
  j["action_set"] = actions;
  json baselines = json::array();
  for (const auto& b : inst.baseline_actions) baselines.push_back(detail::to_json(b));
  j["baseline_actions"] = baselines;
  j["baseline_rewards"] = inst.baseline_rewards;
  j["optimal_index"] = inst.optimal_index;
  j["optimal_reward"] = inst.optimal_reward;
  j["constants"] = {{"kappa_l", inst.constants.kappa_l}, {"kappa_h", inst.constants.kappa_h},
                    {"r_l", inst.constants.r_l},         {"r_h", inst.constants.r_h},
                    {"S", inst.constants.bound_s},       {"L", inst.constants.bound_l}};
  return j;
}

inline BanditInstance instance_from_json(const nlohmann::json& j) {
  BanditInstance inst;
  inst.dim = j.at("dim").get<std::size_t>();
  inst.n_agents = j.at("n_agents").get<std::size_t>();
  inst.alpha = j.at("alpha").get<double>();
  inst.noise_r = j.at("noise_r").get<double>();
  inst.local_thetas.resize(static_cast<Eigen::Index>(inst.dim), static_cast<Eigen::Index>(inst.n_agents));
  const auto& thetas = j.at("local_thetas");
  if (thetas.size() != inst.n_agents) throw ValidationError("instance file: local_thetas count != n_agents");
  for (std::size_t i = 0; i < inst.n_agents; ++i) {
    inst.local_thetas.col(static_cast<Eigen::Index>(i)) = detail::vector_from_json(thetas[i]);
  }
  inst.global_theta = detail::vector_from_json(j.at("global_theta"));
  for (const auto& a : j.at("action_set")) inst.action_set.push_back(detail::vector_from_json(a));
  for (const auto& b : j.at("baseline_actions")) inst.baseline_actions.push_back(detail::vector_from_json(b));
  inst.baseline_rewards = j.at("baseline_rewards").get<std::vector<double>>();
  inst.optimal_index = j.at("optimal_index").get<std::size_t>();
  inst.optimal_action = inst.action_set.at(inst.optimal_index);
  inst.optimal_reward = j.at("optimal_reward").get<double>();
  const auto& c = j.at("constants");
  inst.constants = {c.at("kappa_l").get<double>(), c.at("kappa_h").get<double>(), c.at("r_l").get<double>(),
                    c.at("r_h").get<double>(),     c.at("S").get<double>(),       c.at("L").get<double>()};
  return inst;
}

inline void save_instance(const BanditInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file " + path);
  out << instance_to_json(inst).dump(1) << '\n';
}

inline BanditInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read instance file " + path);
  return instance_from_json(nlohmann::json::parse(in));
}

}  // namespace masclucb
