#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace hbtm::oracle {

Mark mark_from_code(std::uint64_t code, std::size_t W) {
  Mark m(W);
  for (std::size_t w = 0; w < W; ++w) m.set(w, (code >> w) & 1u);
  return m;
}

double j0_prob(const Mark& m, double p0) {
  double p = 1.0;
  for (std::size_t w = 0; w < m.size(); ++w) p *= m.test(w) ? p0 : 1.0 - p0;
  return p;
}

double j1_prob(const Mark& child, const Mark& parent, double p_on, double p_off) {
  double p = 1.0;
  for (std::size_t w = 0; w < child.size(); ++w) {
    if (parent.test(w)) p *= child.test(w) ? 1.0 - p_off : p_off;
    else p *= child.test(w) ? p_on : 1.0 - p_on;
  }
  return p;
}

namespace {

double mu(const ModelParams& p, std::size_t s, double t) {
  const auto& bg = p.background;
  if (t < bg.t_start || t > bg.t_end) return 0.0;
  std::size_t k = static_cast<std::size_t>((t - bg.t_start) / bg.bin_width);
  k = std::min(k, bg.num_bins() - 1);
  return bg.bins[s][k];
}

double trigger(const ModelParams& p, const MarkedEvent& child, const MarkedEvent& parent,
               double tau) {
  const double dt = child.t - parent.t;
  if (dt <= 0.0 || dt > tau) return 0.0;
  const std::size_t s = child.node, r = parent.node;
  return p.theta(s, r) * p.omega(s, r) * std::exp(-p.omega(s, r) * dt) *
         j1_prob(child.mark, parent.mark, p.p_on(s, r), p.p_off(s, r));
}

double background_integral(const ModelParams& p, std::size_t s, double upto) {
  const auto& bg = p.background;
  double total = 0.0;
  for (std::size_t k = 0; k < bg.num_bins(); ++k) {
    const double b = bg.t_start + bg.bin_width * static_cast<double>(k);
    const double e = k + 1 == bg.num_bins() ? bg.t_end : b + bg.bin_width;
    const double hi = std::min(e, upto);
    if (hi > b) total += bg.bins[s][k] * (hi - b);
  }
  return total;
}

double kernel_compensator(const ModelParams& p, const std::vector<MarkedEvent>& ev, double t_end,
                          double tau) {
  double total = 0.0;
  for (const auto& e : ev)
    for (std::size_t s = 0; s < p.S; ++s) {
      const double h = std::min(t_end - e.t, tau);
      total += p.theta(s, e.node) * (1.0 - std::exp(-p.omega(s, e.node) * h));
    }
  return total;
}

}  // namespace

double intensity(const ModelParams& p, const std::vector<MarkedEvent>& ev, std::size_t i,
                 double tau) {
  double lam = mu(p, ev[i].node, ev[i].t) * j0_prob(ev[i].mark, p.p0[ev[i].node]);
  for (std::size_t j = 0; j < ev.size(); ++j) lam += trigger(p, ev[i], ev[j], tau);
  return lam;
}

std::vector<std::vector<double>> branching(const ModelParams& p, const std::vector<MarkedEvent>& ev,
                                           double tau) {
  const std::size_t N = ev.size();
  std::vector<std::vector<double>> q(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    const double lam = intensity(p, ev, i, tau);
    q[i][i] = mu(p, ev[i].node, ev[i].t) * j0_prob(ev[i].mark, p.p0[ev[i].node]) / lam;
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) q[i][j] = trigger(p, ev[i], ev[j], tau) / lam;
  }
  return q;
}

double log_likelihood(const ModelParams& p, const std::vector<MarkedEvent>& ev, double t_end,
                      double tau) {
  double ll = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) ll += std::log(intensity(p, ev, i, tau));
  for (std::size_t s = 0; s < p.S; ++s) ll -= background_integral(p, s, t_end);
  return ll - kernel_compensator(p, ev, t_end, tau);
}

double expected_complete_ll(const ModelParams& p, const std::vector<MarkedEvent>& ev,
                            const std::vector<std::vector<double>>& q, double t_end, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const auto& e = ev[i];
    if (q[i][i] > 0.0)
      total += q[i][i] * std::log(mu(p, e.node, e.t) * j0_prob(e.mark, p.p0[e.node]));
    for (std::size_t j = 0; j < ev.size(); ++j)
      if (j != i && q[i][j] > 0.0) total += q[i][j] * std::log(trigger(p, e, ev[j], tau));
  }
  for (std::size_t s = 0; s < p.S; ++s) total -= background_integral(p, s, t_end);
  return total - kernel_compensator(p, ev, t_end, tau);
}

std::vector<std::vector<double>> dense(const BranchingMatrix& q) {
  const std::size_t N = q.size();
  std::vector<std::vector<double>> out(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    out[i][i] = q.self(i);
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    for (std::size_t k = 0; k < parents.size(); ++k) out[i][parents[k]] = probs[k];
  }
  return out;
}

ModelParams random_params(std::mt19937_64& rng, const RandomSpec& spec) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams p;
  p.S = spec.S;
  p.W = spec.W;
  p.background = BackgroundRate::make(spec.S, 0.0, spec.t_end, spec.bin_width);
  for (auto& row : p.background.bins)
    for (auto& b : row) b = 0.2 + 2.0 * u(rng);
  p.p0.resize(spec.S);
  for (auto& v : p.p0) v = 0.1 + 0.6 * u(rng);
  p.theta = SquareMatrix(spec.S);
  p.omega = SquareMatrix(spec.S);
  p.p_on = SquareMatrix(spec.S);
  p.p_off = SquareMatrix(spec.S);
  for (std::size_t r = 0; r < spec.S; ++r)
    for (std::size_t c = 0; c < spec.S; ++c) {
      p.theta(r, c) = 0.05 + 0.4 * u(rng);
      p.omega(r, c) = 0.3 + 3.0 * u(rng);
      p.p_on(r, c) = 0.05 + 0.4 * u(rng);
      p.p_off(r, c) = 0.05 + 0.6 * u(rng);
    }
  return p;
}

std::vector<MarkedEvent> random_events(std::mt19937_64& rng, std::size_t N, const RandomSpec& spec) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MarkedEvent> ev(N);
  for (std::size_t i = 0; i < N; ++i) {
    ev[i].t = spec.t_end * u(rng);
    ev[i].node = std::uniform_int_distribution<std::size_t>(0, spec.S - 1)(rng);
    ev[i].mark = Mark(spec.W);
    for (std::size_t w = 0; w < spec.W; ++w) ev[i].mark.set(w, u(rng) < 0.4);
    ev[i].post_id = "e" + std::to_string(i);
  }
  std::sort(ev.begin(), ev.end(), [](const MarkedEvent& a, const MarkedEvent& b) { return a.t < b.t; });
  return ev;
}

ModelParams make_params(std::size_t W, double t_end, double mu_rate,
                        const std::vector<std::vector<double>>& theta, double omega, double p_on,
                        double p_off, double p0) {
  const std::size_t S = theta.size();
  ModelParams p;
  p.S = S;
  p.W = W;
  p.background = BackgroundRate::make(S, 0.0, t_end, 1.0, mu_rate);
  p.p0.assign(S, p0);
  p.theta = SquareMatrix(S);
  for (std::size_t r = 0; r < S; ++r)
    for (std::size_t c = 0; c < S; ++c) p.theta(r, c) = theta[r][c];
  p.omega = SquareMatrix(S, omega);
  p.p_on = SquareMatrix(S, p_on);
  p.p_off = SquareMatrix(S, p_off);
  return p;
}

}  // namespace hbtm::oracle
