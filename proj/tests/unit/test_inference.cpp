#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hbtm/error.hpp"
#include "hbtm/inference.hpp"
#include "hbtm/simulator.hpp"
#include "oracles.hpp"

using namespace hbtm;

namespace {

Mark bits(std::initializer_list<int> b) {
  std::vector<std::uint8_t> v(b.begin(), b.end());
  return Mark::from_bits(v);
}

MarkedEvent event(double t, std::size_t node, Mark m, std::string id = {}) {
  return MarkedEvent{t, node, std::move(m), std::move(id)};
}

void expect_matches_oracle(const BranchingMatrix& q, const std::vector<std::vector<double>>& ref,
                           double tol) {
  const auto d = oracle::dense(q);
  ASSERT_EQ(d.size(), ref.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j) EXPECT_NEAR(d[i][j], ref[i][j], tol) << i << "," << j;
}

// Simulated data from a two-node model, for fits.
std::vector<MarkedEvent> simulated(std::uint64_t seed, double t_end = 40.0, double mu = 1.2) {
  const auto p = oracle::make_params(6, t_end, mu, {{0.3, 0.2}, {0.1, 0.25}}, 1.5, 0.1, 0.3, 0.3);
  std::vector<MarkedEvent> out;
  for (auto& e : simulate(p, t_end, seed)) out.push_back(std::move(e.event));
  return out;
}

}  // namespace

TEST(EStep, SingleEventIsSpontaneous) {
  const auto p = oracle::make_params(2, 5.0, 1.0, {{0.5}}, 1.0, 0.2, 0.3, 0.4);
  const auto q = e_step(p, {{event(1.0, 0, bits({1, 0}))}}, 14.0);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(q.self(0), 1.0);
  EXPECT_TRUE(q.parents(0).empty());
}

TEST(EStep, ZeroThetaAllSpontaneous) {
  std::mt19937_64 rng(1);
  const oracle::RandomSpec spec{2, 4, 10.0, 1.0};
  auto p = oracle::random_params(rng, spec);
  p.theta = SquareMatrix(2, 0.0);
  const auto ev = oracle::random_events(rng, 20, spec);
  const auto q = e_step(p, ev, kNoTruncation);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_DOUBLE_EQ(q.self(i), 1.0);
}

TEST(EStep, ThreeEventToyMatchesOracle) {
  const auto p = oracle::make_params(2, 4.0, 0.7, {{0.6}}, 1.3, 0.2, 0.35, 0.3);
  const std::vector<MarkedEvent> ev = {event(0.5, 0, bits({1, 0})), event(1.1, 0, bits({1, 1})),
                                       event(2.0, 0, bits({0, 1}))};
  expect_matches_oracle(e_step(p, ev, kNoTruncation), oracle::branching(p, ev, kNoTruncation), 1e-12);
}

TEST(EStep, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 20; ++k) {
    const oracle::RandomSpec spec{1 + rng() % 3, 1 + rng() % 6, 6.0, 0.5};
    const auto p = oracle::random_params(rng, spec);
    const auto ev = oracle::random_events(rng, 1 + rng() % 30, spec);
    const double tau = k % 2 ? kNoTruncation : 1.5;
    expect_matches_oracle(e_step(p, ev, tau), oracle::branching(p, ev, tau), 1e-10);
  }
}

TEST(EStep, RowStochasticAndConserving) {
  const auto ev = simulated(3);
  const EmConfig config;
  const auto p = initialize(ev, 2, 6, config);
  const auto q = e_step(p, ev, config.tau_max);
  EXPECT_NO_THROW(q.validate(1e-9));
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    total += q.self(i);
    for (double v : q.probs(i)) total += v;
  }
  EXPECT_NEAR(total, static_cast<double>(ev.size()), 1e-9);
}

TEST(EStep, EqualTimesAreNotParents) {
  const auto p = oracle::make_params(2, 4.0, 1.0, {{0.5}}, 1.0, 0.2, 0.3, 0.4);
  const auto q = e_step(p, {{event(1.0, 0, bits({1, 0})), event(1.0, 0, bits({1, 0}))}}, 14.0);
  EXPECT_TRUE(q.parents(1).empty());
}

TEST(EStep, ZeroIntensityRowNamesEvent) {
  auto p = oracle::make_params(2, 4.0, 1.0, {{0.5}}, 1.0, 0.2, 0.3, 0.4);
  p.background.bins[0][2] = 0.0;
  try {
    e_step(p, {{event(2.5, 0, bits({1, 0}))}}, 14.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("event 0"), std::string::npos) << e.what();
  }
}

TEST(EStep, ThreadCountDoesNotChangeResult) {
  const auto ev = simulated(4);
  const auto p = initialize(ev, 2, 6, {});
  EXPECT_EQ(e_step(p, ev, 14.0, 1), e_step(p, ev, 14.0, 3));
}

TEST(MStep, AllSpontaneous) {
  const std::vector<MarkedEvent> ev = {event(0.2, 0, bits({1, 0})), event(0.7, 0, bits({1, 1})),
                                       event(1.5, 1, bits({0, 0})), event(2.9, 0, bits({0, 1}))};
  EmConfig config;
  config.t_start = 0.0;
  config.t_end = 3.0;
  const auto prev = initialize(ev, 2, 2, config);
  BranchingMatrix q;
  for (std::size_t i = 0; i < ev.size(); ++i) q.append_row(1.0, {}, {});
  const auto next = m_step(ev, q, prev, config);
  for (double v : next.theta.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(next.background.bins[0], (std::vector<double>{2.0, 0.0, 1.0}));
  EXPECT_EQ(next.background.bins[1], (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_DOUBLE_EQ(next.p0[0], 4.0 / 6.0);
  EXPECT_EQ(next.omega, prev.omega);  // no attributed mass anywhere
}

TEST(MStep, SinglePairOmega) {
  const std::vector<MarkedEvent> ev = {event(1.0, 0, bits({1, 0, 1})), event(1.5, 1, bits({1, 1, 0}))};
  EmConfig config;
  config.t_start = 0.0;
  config.t_end = 1000.0;
  const auto prev = initialize(ev, 2, 3, config);
  BranchingMatrix q;
  q.append_row(1.0, {}, {});
  const std::size_t parent[] = {0};
  const double prob[] = {1.0};
  q.append_row(0.0, parent, prob);
  const auto next = m_step(ev, q, prev, config);
  EXPECT_NEAR(next.omega(1, 0), 2.0, 1e-10);
  EXPECT_NEAR(next.theta(1, 0), 1.0, 1e-10);
  EXPECT_EQ(next.omega(0, 1), prev.omega(0, 1));
  EXPECT_EQ(next.p_on(0, 0), prev.p_on(0, 0));
  EXPECT_EQ(next.p_on(1, 0), config.bounds.clip_prob(1.0));
  EXPECT_DOUBLE_EQ(next.p_off(1, 0), 0.5);
  EXPECT_EQ(next.p0[1], prev.p0[1]);  // node 1 has no spontaneous mass
}

TEST(MStep, MatchesClosedFormsOnLongWindow) {
  // With the window far beyond every event the edge terms vanish and the
  // update reduces to ratios of attributed sums.
  std::mt19937_64 rng(77);
  for (int k = 0; k < 10; ++k) {
    const oracle::RandomSpec spec{1 + rng() % 3, 1 + rng() % 6, 5.0, 1.0};
    const std::size_t S = spec.S, W = spec.W;
    const auto ev = oracle::random_events(rng, 10 + rng() % 20, spec);
    EmConfig config;
    config.t_start = 0.0;
    config.t_end = 400.0;
    config.tau_max = kNoTruncation;
    const auto prev = initialize(ev, S, W, config);
    const auto q = e_step(prev, ev, config.tau_max);
    const auto next = m_step(ev, q, prev, config);
    const auto d = oracle::dense(q);

    std::vector<double> n_src(S, 0.0);
    for (const auto& e : ev) n_src[e.node] += 1.0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t r = 0; r < S; ++r) {
        double mass = 0, delay = 0, on = 0, on_d = 0, off = 0, off_d = 0;
        for (std::size_t i = 0; i < ev.size(); ++i)
          for (std::size_t j = 0; j < i; ++j) {
            if (ev[i].node != s || ev[j].node != r || d[i][j] == 0.0) continue;
            std::size_t w1 = 0, w2 = 0, w3 = 0, w4 = 0;
            for (std::size_t w = 0; w < W; ++w) {
              const bool ci = ev[i].mark.test(w), pj = ev[j].mark.test(w);
              w1 += ci && !pj;
              w2 += !ci && !pj;
              w3 += !ci && pj;
              w4 += ci && pj;
            }
            mass += d[i][j];
            delay += d[i][j] * (ev[i].t - ev[j].t);
            on += d[i][j] * w1;
            on_d += d[i][j] * (w1 + w2);
            off += d[i][j] * w3;
            off_d += d[i][j] * (w3 + w4);
          }
        if (n_src[r] > 0) EXPECT_NEAR(next.theta(s, r), mass / n_src[r], 1e-10);
        if (mass < config.zero_mass) continue;
        EXPECT_NEAR(next.omega(s, r), config.bounds.clip_omega(mass / delay), 1e-8 * next.omega(s, r));
        if (on_d > 0) EXPECT_NEAR(next.p_on(s, r), config.bounds.clip_prob(on / on_d), 1e-10);
        if (off_d > 0) EXPECT_NEAR(next.p_off(s, r), config.bounds.clip_prob(off / off_d), 1e-10);
      }
  }
}

TEST(MStep, MaximizesExpectedCompleteLikelihood) {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 6; ++k) {
    const oracle::RandomSpec spec{1 + rng() % 2, 1 + rng() % 5, 6.0, 1.0};
    const auto ev = oracle::random_events(rng, 25, spec);
    EmConfig config;
    config.t_start = 0.0;
    config.t_end = 6.0;
    config.tau_max = 2.5;
    auto prev = oracle::random_params(rng, spec);
    const auto q = e_step(prev, ev, config.tau_max);
    const auto d = oracle::dense(q);
    const auto next = m_step(ev, q, prev, config);
    const auto Q = [&](const ModelParams& p) {
      return oracle::expected_complete_ll(p, ev, d, 6.0, config.tau_max);
    };
    const double best = Q(next);
    EXPECT_GE(best, Q(prev) - 1e-12);
    for (double h : {1e-4, -1e-4}) {
      for (std::size_t idx = 0; idx < spec.S * spec.S; ++idx) {
        const std::size_t s = idx / spec.S, r = idx % spec.S;
        auto p = next;
        p.theta(s, r) = std::max(0.0, p.theta(s, r) * (1 + h));
        EXPECT_LE(Q(p), best + 1e-10);
        p = next;
        p.omega(s, r) *= 1 + h;
        EXPECT_LE(Q(p), best + 1e-10);
        p = next;
        p.p_on(s, r) = std::clamp(p.p_on(s, r) * (1 + h), 1e-6, 1 - 1e-6);
        EXPECT_LE(Q(p), best + 1e-10);
        p = next;
        p.p_off(s, r) = std::clamp(p.p_off(s, r) * (1 + h), 1e-6, 1 - 1e-6);
        EXPECT_LE(Q(p), best + 1e-10);
      }
      for (std::size_t s = 0; s < spec.S; ++s) {
        auto p = next;
        p.p0[s] = std::clamp(p.p0[s] * (1 + h), 1e-6, 1 - 1e-6);
        EXPECT_LE(Q(p), best + 1e-10);
        p = next;
        for (auto& b : p.background.bins[s]) b *= 1 + h;
        EXPECT_LE(Q(p), best + 1e-10);
      }
    }
  }
}

TEST(Fit, MonotoneOverSeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ev = simulated(seed, 30.0, 2.0);
    EmConfig config;
    config.max_iter = 60;
    config.tol = 0.0;
    const auto report = fit(ev, 2, 6, config);
    const auto& tr = report.log_likelihood_trace;
    for (std::size_t k = 1; k < tr.size(); ++k)
      EXPECT_GE(tr[k], tr[k - 1] - 1e-8 * std::abs(tr[k - 1])) << "seed " << seed << " iter " << k;
  }
}

TEST(Fit, TraceMatchesDirectLikelihood) {
  const auto ev = simulated(5);
  EmConfig config;
  config.max_iter = 5;
  const auto r = fit(ev, 2, 6, config);
  const double direct = log_likelihood(r.final_params, ev, r.final_params.background.t_end, config.tau_max).value;
  const auto q = e_step(r.final_params, ev, config.tau_max);
  EXPECT_NEAR(log_likelihood_from_estep(r.final_params, ev, q, config.tau_max), direct,
              1e-9 * std::abs(direct));
}

TEST(Fit, ZeroIterationsReturnsInitialization) {
  const auto ev = simulated(6);
  EmConfig config;
  config.max_iter = 0;
  const auto r = fit(ev, 2, 6, config);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.final_params, initialize(ev, 2, 6, config));
  ASSERT_EQ(r.log_likelihood_trace.size(), 1u);
}

TEST(Fit, EqualTimestampOrderDoesNotMatter) {
  auto ev = simulated(7);
  ev.insert(ev.begin() + 10, MarkedEvent{ev[9].t, 1, bits({1, 0, 0, 1, 0, 0}), "dup-a"});
  ev.insert(ev.begin() + 10, MarkedEvent{ev[9].t, 0, bits({0, 1, 0, 1, 1, 0}), "dup-b"});
  EmConfig config;
  config.max_iter = 30;
  const auto a = fit(ev, 2, 6, config);
  std::swap(ev[10], ev[11]);
  std::swap(ev[9], ev[10]);
  const auto b = fit(ev, 2, 6, config);
  const auto pa = a.final_params, pb = b.final_params;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(pa.theta.data()[k], pb.theta.data()[k], 1e-9);
    EXPECT_NEAR(pa.omega.data()[k], pb.omega.data()[k], 1e-9 * pa.omega.data()[k]);
  }
  EXPECT_NEAR(a.log_likelihood_trace.back(), b.log_likelihood_trace.back(),
              1e-10 * std::abs(a.log_likelihood_trace.back()));
}

TEST(Fit, TimeShiftEquivariance) {
  const auto ev = simulated(8);
  auto shifted = ev;
  for (auto& e : shifted) e.t += 37.0;
  EmConfig config;
  config.max_iter = 25;
  config.tol = 0.0;
  const auto a = fit(ev, 2, 6, config);
  const auto b = fit(shifted, 2, 6, config);
  EXPECT_DOUBLE_EQ(b.final_params.background.t_start, a.final_params.background.t_start + 37.0);
  const auto &pa = a.final_params, &pb = b.final_params;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(pa.theta.data()[k], pb.theta.data()[k], 1e-10);
    EXPECT_NEAR(pa.omega.data()[k], pb.omega.data()[k], 1e-10);
    EXPECT_NEAR(pa.p_on.data()[k], pb.p_on.data()[k], 1e-10);
    EXPECT_NEAR(pa.p_off.data()[k], pb.p_off.data()[k], 1e-10);
  }
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < pa.background.num_bins(); ++k)
      EXPECT_NEAR(pa.background.bins[s][k], pb.background.bins[s][k], 1e-10);
  const auto da = oracle::dense(a.branching), db = oracle::dense(b.branching);
  for (std::size_t i = 0; i < da.size(); ++i)
    for (std::size_t j = 0; j < da.size(); ++j) EXPECT_NEAR(da[i][j], db[i][j], 1e-10);
}

TEST(Fit, TyingSharesParameters) {
  const auto ev = simulated(9);
  EmConfig config;
  config.max_iter = 20;
  config.tying = Tying::global;
  const auto g = fit(ev, 2, 6, config).final_params;
  for (double v : g.omega.data()) EXPECT_EQ(v, g.omega(0, 0));
  for (double v : g.p_off.data()) EXPECT_EQ(v, g.p_off(0, 0));
  config.tying = Tying::receiver;
  const auto r = fit(ev, 2, 6, config).final_params;
  EXPECT_EQ(r.omega(0, 0), r.omega(0, 1));
  EXPECT_EQ(r.omega(1, 0), r.omega(1, 1));
  EXPECT_NE(r.theta(0, 0), r.theta(0, 1));
}

TEST(Fit, RestartsNeverWorse) {
  const auto ev = simulated(10);
  EmConfig config;
  config.max_iter = 40;
  const double base = fit(ev, 2, 6, config).log_likelihood_trace.back();
  config.restarts = 2;
  config.restart_seed = 5;
  EXPECT_GE(fit(ev, 2, 6, config).log_likelihood_trace.back(), base);
}

TEST(Fit, RejectsUnsortedAndEmpty) {
  EXPECT_THROW(fit({}, 1, 2, {}), DataError);
  const std::vector<MarkedEvent> ev = {event(2.0, 0, bits({1, 0})), event(1.0, 0, bits({0, 1}))};
  EXPECT_THROW(fit(ev, 1, 2, {}), DataError);
}

TEST(Initialize, DeterministicWithEmpiricalRates) {
  const std::vector<MarkedEvent> ev = {event(0.5, 0, bits({1, 1, 0, 0})), event(1.5, 0, bits({1, 0, 0, 0}))};
  EmConfig config;
  const auto a = initialize(ev, 3, 4, config);
  EXPECT_EQ(a, initialize(ev, 3, 4, config));
  EXPECT_DOUBLE_EQ(a.p0[0], 3.0 / 8.0);
  EXPECT_EQ(a.p0[2], config.bounds.prob_eps);
  for (double b : a.background.bins[2]) EXPECT_EQ(b, config.background_floor);
  EXPECT_EQ(a.theta(1, 0), 0.1);
  EXPECT_EQ(a.omega(0, 0), 1.0);
  EXPECT_EQ(a.p_on(0, 0), 0.05);
  EXPECT_EQ(a.p_off(0, 0), 0.5);
  EXPECT_EQ(a.background.t_start, 0.0);
  EXPECT_EQ(a.background.bins[0], (std::vector<double>{1.0, 1.0}));
}

TEST(Tying, ParseNames) {
  EXPECT_EQ(parse_tying("receiver"), Tying::receiver);
  EXPECT_EQ(to_string(Tying::global), "global");
  EXPECT_THROW(parse_tying("node"), ConfigError);
}
