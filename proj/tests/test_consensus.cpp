#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "masclucb/consensus.hpp"

using namespace masclucb;
using Catch::Matchers::WithinAbs;

namespace {

// Chebyshev polynomial of the first kind by its three-term recurrence.
double chebyshev(std::size_t h, double x) {
  double prev = 1.0, curr = x;
  if (h == 0) return prev;
  for (std::size_t k = 1; k < h; ++k) {
    const double next = 2.0 * x * curr - prev;
    prev = curr;
    curr = next;
  }
  return curr;
}

// T_h(W/l2) v / T_h(1/l2) through the eigendecomposition of W.
Eigen::VectorXd spectral_oracle(const NetworkGraph& g, const Eigen::VectorXd& v, std::size_t h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.dense_weights());
  const double l2 = g.lambda2_abs();
  Eigen::VectorXd coeff(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < coeff.size(); ++i) {
    coeff(i) = chebyshev(h, es.eigenvalues()(i) / l2) / chebyshev(h, 1.0 / l2);
  }
  return es.eigenvectors() * coeff.asDiagonal() * es.eigenvectors().transpose() * v;
}

}  // namespace

TEST_CASE("comm_schedule worked values") {
  REQUIRE(comm_schedule(1, 4, 1.0 / 3.0) == 2);
  REQUIRE(comm_schedule(1, 100, 0.9) == 12);
  for (std::size_t s : {1u, 7u, 1000u}) REQUIRE(comm_schedule(s, 1, 0.0) == 0);
  REQUIRE(comm_schedule(5, 100, 0.0) == 1);
  REQUIRE(comm_schedule(5, 100, 1e-13) == 1);
  REQUIRE_THROWS_AS(comm_schedule(1, 4, 1.0), ValidationError);
  REQUIRE_THROWS_AS(comm_schedule(0, 4, 0.5), ValidationError);
}

TEST_CASE("comm_schedule follows the closed form") {
  for (double l2 : {0.1, 0.5, 0.9, 0.99}) {
    for (std::size_t s = 1; s <= 200; s += 7) {
      const double expect = std::ceil(std::log(2.0 * 50.0 * static_cast<double>(s)) / std::sqrt(2.0 * std::log(1.0 / l2)));
      REQUIRE(comm_schedule(s, 50, l2) == static_cast<std::size_t>(expect));
    }
  }
}

TEST_CASE("mix state starts from the documented initialization") {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  const MixState st = MixState::start(v);
  REQUIRE(st.c_prev == 0.0);
  REQUIRE(st.previous.isZero());
  REQUIRE(st.step == 0);
  REQUIRE_THROWS_AS(mix_step(MixState{}, build_topology(TopologyKind::ring, 3)), UsageError);
}

TEST_CASE("c coefficients follow the recurrence") {
  auto g = build_topology(TopologyKind::ring, 6);
  const double l2 = g.lambda2_abs();
  MixState st = MixState::start(Eigen::VectorXd::LinSpaced(6, 0.0, 1.0));
  st = mix_step(st, g);
  REQUIRE_THAT(st.c_curr, WithinAbs(1.0 / l2, 1e-12));
  for (int h = 0; h < 8; ++h) {
    const double expect = 2.0 * st.c_curr / l2 - st.c_prev;
    const MixState next = mix_step(st, g);
    REQUIRE(next.c_curr == expect);
    st = next;
  }
}

TEST_CASE("constant vectors are preserved") {
  for (auto g : {build_topology(TopologyKind::ring, 9), build_topology(TopologyKind::k_regular, 10, 4),
                 build_topology(TopologyKind::erdos_renyi, 12, std::nullopt, 0.3, 5)}) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
    for (std::size_t q : {1u, 2u, 5u, 20u}) {
      REQUIRE((run_consensus(ones, g, q).estimates - ones).cwiseAbs().maxCoeff() <= 1e-12);
      REQUIRE((run_consensus(0.37 * ones, g, q).estimates - 0.37 * ones).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("ring of 4 from a unit impulse") {
  auto g = build_topology(TopologyKind::ring, 4);
  Eigen::VectorXd v(4);
  v << 1.0, 0.0, 0.0, 0.0;
  const std::size_t q = comm_schedule(1, 4, g.lambda2_abs());
  REQUIRE(q == 2);
  const auto res = run_consensus(v, g, q);
  REQUIRE(res.rounds_used == 2);
  REQUIRE_THAT(res.true_average, WithinAbs(0.25, 1e-15));
  REQUIRE((res.estimates.array() - 0.25).abs().maxCoeff() <= 1.0);
  REQUIRE((res.estimates - spectral_oracle(g, v, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("output equals the scaled Chebyshev polynomial of W") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto g : {build_topology(TopologyKind::ring, 7), build_topology(TopologyKind::k_regular, 12, 4),
                 build_topology(TopologyKind::erdos_renyi, 10, std::nullopt, 0.4, 2)}) {
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::VectorXd v(n);
    for (auto& x : v) x = u(rng);
    for (std::size_t h = 1; h <= 15; ++h) {
      REQUIRE((run_consensus(v, g, h).estimates - spectral_oracle(g, v, h)).cwiseAbs().maxCoeff() < 1e-10);
    }
    // basis-vector construction of p_h(W) and linearity
    const std::size_t h = 6;
    Eigen::MatrixXd p(n, n);
    for (Eigen::Index j = 0; j < n; ++j) p.col(j) = run_consensus(Eigen::VectorXd::Unit(n, j), g, h).estimates;
    REQUIRE((p * v - run_consensus(v, g, h).estimates).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("degenerate networks") {
  auto single = build_topology(TopologyKind::complete, 1);
  Eigen::VectorXd one(1);
  one << 0.7;
  REQUIRE(run_consensus(one, single, 0).estimates(0) == 0.7);

  auto complete = build_topology(TopologyKind::complete, 100);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(100);
  for (auto& x : v) x = u(rng);
  const auto res = run_consensus(v, complete, comm_schedule(1, 100, 0.0));
  REQUIRE((res.estimates.array() - v.mean()).abs().maxCoeff() < 1e-14);
}

TEST_CASE("ring of 8 meets the 1/s accuracy schedule") {
  auto g = build_topology(TopologyKind::ring, 8);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd v(8);
    for (auto& x : v) x = u(rng);
    for (std::size_t s = 1; s <= 50; ++s) {
      const auto res = run_consensus(v, g, comm_schedule(s, 8, g.lambda2_abs()));
      REQUIRE((res.estimates.array() - v.mean()).abs().maxCoeff() <= 1.0 / static_cast<double>(s));
    }
  }
}

TEST_CASE("entries in [-1,1] also meet the 1/s schedule") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto g : {build_topology(TopologyKind::ring, 16), build_topology(TopologyKind::k_regular, 16, 4),
                 build_topology(TopologyKind::erdos_renyi, 16, std::nullopt, 0.25, 4)}) {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd v(16);
      for (auto& x : v) x = u(rng);
      for (std::size_t s = 1; s <= 50; ++s) {
        const auto res = run_consensus(v, g, comm_schedule(s, 16, g.lambda2_abs()));
        REQUIRE((res.estimates.array() - v.mean()).abs().maxCoeff() <= 1.0 / static_cast<double>(s));
      }
    }
  }
}

TEST_CASE("mix_step is local") {
  auto g = build_topology(TopologyKind::ring, 10);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(10);
  for (auto& x : v) x = u(rng);
  MixState a = mix_step(MixState::start(v), g);
  // agent 0 neighbours: 1 and 9. Perturb everyone else in both current and previous.
  MixState b0 = MixState::start(v);
  MixState b = mix_step(b0, g);
  for (int k = 2; k <= 8; ++k) b.current(k) += 5.0, b.previous(k) -= 3.0;
  const MixState a2 = mix_step(a, g);
  const MixState b2 = mix_step(b, g);
  REQUIRE(a2.current(0) == b2.current(0));

  Eigen::VectorXd w = v;
  for (int k = 2; k <= 8; ++k) w(k) = -w(k);
  REQUIRE(mix_step(MixState::start(v), g).current(0) == mix_step(MixState::start(w), g).current(0));
}

TEST_CASE("consensus is deterministic") {
  auto g = build_topology(TopologyKind::erdos_renyi, 20, std::nullopt, 0.2, 6);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(20, 0.0, 1.0);
  const auto a = run_consensus(v, g, 9);
  const auto b = run_consensus(v, g, 9);
  REQUIRE((a.estimates.array() == b.estimates.array()).all());
}
