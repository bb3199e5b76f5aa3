#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "hbtm/error.hpp"
#include "hbtm/simulator.hpp"
#include "oracles.hpp"

using namespace hbtm;

namespace {

ModelParams with_theta(const std::vector<std::vector<double>>& theta, double t_end = 50.0, double mu = 1.0,
                       double omega = 2.0, double p_on = 0.1, double p_off = 0.3) {
  return oracle::make_params(8, t_end, mu, theta, omega, p_on, p_off, 0.3);
}

double eigen_radius(const ModelParams& p) {
  Eigen::MatrixXd m(p.S, p.S);
  for (std::size_t r = 0; r < p.S; ++r)
    for (std::size_t c = 0; c < p.S; ++c) m(r, c) = p.theta(r, c);
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST(BranchingRatio, KnownValues) {
  EXPECT_NEAR(branching_ratio(with_theta({{0.5}})), 0.5, 1e-8);
  EXPECT_EQ(branching_ratio(with_theta({{0, 0}, {0, 0}})), 0.0);
  EXPECT_NEAR(branching_ratio(with_theta({{0.2, 0.3}, {0.3, 0.2}})), 0.5, 1e-8);
}

TEST(BranchingRatio, MatchesEigenSolver) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    const std::size_t S = 1 + rng() % 6;
    std::vector<std::vector<double>> th(S, std::vector<double>(S));
    for (auto& row : th)
      for (auto& v : row) v = u(rng) < 0.3 ? 0.0 : 0.4 * u(rng);
    const auto p = with_theta(th);
    const double ref = eigen_radius(p);
    EXPECT_NEAR(branching_ratio(p), ref, 1e-7 * std::max(1.0, ref)) << "S=" << S;
  }
}

TEST(BranchingRatio, PeriodicMatrix) {
  // Eigenvalues +-0.6: plain power iteration on theta would oscillate.
  EXPECT_NEAR(branching_ratio(with_theta({{0, 0.9}, {0.4, 0}})), 0.6, 1e-8);
}

TEST(Simulate, RefusesSupercritical) {
  EXPECT_THROW(simulate(with_theta({{1.2}}), 10.0, 1), DataError);
}

TEST(Simulate, RejectsHorizonOutsideWindow) {
  EXPECT_THROW(simulate(with_theta({{0.2}}, 10.0), 11.0, 1), DataError);
}

TEST(Simulate, DeterministicPerSeed) {
  const auto p = with_theta({{0.3, 0.1}, {0.2, 0.3}});
  const auto a = simulate(p, 50.0, 3), b = simulate(p, 50.0, 3), c = simulate(p, 50.0, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].event.t, b[i].event.t);
    EXPECT_EQ(a[i].event.mark, b[i].event.mark);
    EXPECT_EQ(a[i].parent, b[i].parent);
  }
  EXPECT_NE(a.front().event.t, c.front().event.t);
}

TEST(Simulate, ParentageConsistent) {
  const auto sim = simulate(with_theta({{0.4, 0.1}, {0.2, 0.3}}), 50.0, 5);
  for (std::size_t i = 0; i < sim.size(); ++i) {
    if (i) EXPECT_LE(sim[i - 1].event.t, sim[i].event.t);
    EXPECT_EQ(sim[i].generation == 0, !sim[i].parent.has_value());
    if (sim[i].parent) {
      const auto& par = sim[*sim[i].parent];
      EXPECT_LT(par.event.t, sim[i].event.t);
      EXPECT_EQ(sim[i].generation, par.generation + 1);
    }
  }
}

TEST(Simulate, ZeroThetaCountIsPoisson) {
  const auto p = with_theta({{0, 0}, {0, 0}}, 20.0, 1.5);
  const double mean = 2 * 20.0 * 1.5;
  double sum = 0.0;
  const int runs = 200;
  for (int seed = 0; seed < runs; ++seed) {
    const auto sim = simulate(p, 20.0, seed);
    for (const auto& e : sim) EXPECT_EQ(e.generation, 0);
    sum += static_cast<double>(sim.size());
  }
  EXPECT_NEAR(sum / runs, mean, 3.0 * std::sqrt(mean / runs));
}

TEST(Simulate, IdentityTransmission) {
  auto p = with_theta({{0.5}}, 40.0);
  p.p_on = SquareMatrix(1, 1e-6);
  p.p_off = SquareMatrix(1, 1e-6);
  const auto sim = simulate(p, 40.0, 9);
  for (const auto& e : sim)
    if (e.parent) EXPECT_EQ(e.event.mark, sim[*e.parent].event.mark);
}

TEST(Simulate, OffspringDelayAndFlipStatistics) {
  // Single node, long horizon: offspring per event ~ Poisson(0.5), delays
  // ~ Exp(2), per-word flips ~ Bernoulli(p_on / p_off).
  const double theta = 0.5, omega = 2.0, p_on = 0.1, p_off = 0.3;
  const auto p = with_theta({{theta}}, 2000.0, 1.0, omega, p_on, p_off);
  const auto sim = simulate(p, 2000.0, 17);
  std::vector<int> kids(sim.size(), 0);
  double delay_sum = 0.0, on = 0, off_trials = 0, off = 0, on_trials = 0;
  std::size_t children = 0, parents = 0;
  for (const auto& e : sim) {
    if (!e.parent) continue;
    const auto& par = sim[*e.parent];
    ++kids[*e.parent];
    ++children;
    delay_sum += e.event.t - par.event.t;
    for (std::size_t w = 0; w < 8; ++w) {
      if (par.event.mark.test(w)) {
        ++off_trials;
        off += !e.event.mark.test(w);
      } else {
        ++on_trials;
        on += e.event.mark.test(w);
      }
    }
  }
  // Parents early enough that censoring at t_end is negligible.
  double kid_sum = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i)
    if (sim[i].event.t < 1990.0) {
      ++parents;
      kid_sum += kids[i];
    }
  EXPECT_NEAR(kid_sum / parents, theta, 3.0 * std::sqrt(theta / parents));
  EXPECT_NEAR(delay_sum / children, 1.0 / omega, 3.0 / omega / std::sqrt(children));
  EXPECT_NEAR(on / on_trials, p_on, 3.0 * std::sqrt(p_on * (1 - p_on) / on_trials));
  EXPECT_NEAR(off / off_trials, p_off, 3.0 * std::sqrt(p_off * (1 - p_off) / off_trials));
}

TEST(Simulate, EmpiricalThetaPerPair) {
  const std::vector<std::vector<double>> th = {{0.2, 0.35}, {0.1, 0.25}};
  const auto p = with_theta(th, 1500.0);
  const auto sim = simulate(p, 1500.0, 23);
  double count[2][2] = {}, events[2] = {};
  for (const auto& e : sim) {
    if (e.event.t < 1490.0) ++events[e.event.node];
    if (e.parent && sim[*e.parent].event.t < 1490.0) ++count[e.event.node][sim[*e.parent].event.node];
  }
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t r = 0; r < 2; ++r)
      EXPECT_NEAR(count[s][r] / events[r], th[s][r], 3.0 * std::sqrt(th[s][r] / events[r]));
}
