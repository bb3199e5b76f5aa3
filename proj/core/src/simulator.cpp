#include "hbtm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hbtm/error.hpp"

namespace hbtm {

double branching_ratio(const ModelParams& params, double tol, int max_iter) {
  const std::size_t S = params.theta.size();
  if (S == 0) return 0.0;
  bool all_zero = true;
  for (double v : params.theta.data()) all_zero = all_zero && v == 0.0;
  if (all_zero) return 0.0;

  // theta + I has the same Perron vector and a strictly dominant eigenvalue
  // rho + 1, so the iteration converges even for periodic theta.
  std::vector<double> x(S, 1.0), y(S);
  double upper = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t r = 0; r < S; ++r) {
      double acc = x[r];
      for (std::size_t c = 0; c < S; ++c) acc += params.theta(r, c) * x[c];
      y[r] = acc;
    }
    double lo = INFINITY, hi = 0.0, norm = 0.0;
    for (std::size_t r = 0; r < S; ++r) {
      lo = std::min(lo, y[r] / x[r]);
      hi = std::max(hi, y[r] / x[r]);
      norm = std::max(norm, y[r]);
    }
    upper = hi - 1.0;
    if (hi - lo <= tol * std::max(1.0, hi)) return 0.5 * (lo + hi) - 1.0;
    for (std::size_t r = 0; r < S; ++r) x[r] = y[r] / norm;
  }
  return upper;
}

std::vector<SimulatedEvent> simulate(const ModelParams& params, double t_end, std::uint64_t seed) {
  params.validate();
  const auto& bg = params.background;
  if (t_end < bg.t_start || t_end > bg.t_end)
    throw DataError("simulation end " + std::to_string(t_end) +
                    " lies outside the background window");
  const double rho = branching_ratio(params);
  if (rho >= 1.0)
    throw DataError("branching ratio " + std::to_string(rho) +
                    " >= 1: the process is not subcritical");

  const std::size_t S = params.S, W = params.W;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  struct Raw {
    MarkedEvent ev;
    std::optional<std::size_t> parent;
    int generation;
  };
  std::vector<Raw> raw;

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < bg.num_bins(); ++k) {
      const double b = bg.bin_begin(k);
      const double e = std::min(b + bg.bin_length(k), t_end);
      if (e <= b) break;
      const double mass = bg.bins[s][k] * (e - b);
      if (mass <= 0.0) continue;
      const auto n = std::poisson_distribution<long long>(mass)(rng);
      for (long long c = 0; c < n; ++c) {
        Raw r{{}, std::nullopt, 0};
        r.ev.t = b + (e - b) * unif(rng);
        r.ev.node = s;
        r.ev.mark = Mark(W);
        for (std::size_t w = 0; w < W; ++w)
          if (unif(rng) < params.p0[s]) r.ev.mark.set(w);
        raw.push_back(std::move(r));
      }
    }
  }

  for (std::size_t idx = 0; idx < raw.size(); ++idx) {
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t src = raw[idx].ev.node;
      const double th = params.theta(s, src);
      if (th <= 0.0) continue;
      const auto n = std::poisson_distribution<long long>(th)(rng);
      for (long long c = 0; c < n; ++c) {
        const double delay = std::exponential_distribution<double>(params.omega(s, src))(rng);
        Mark child(W);
        const double p_on = params.p_on(s, src), p_off = params.p_off(s, src);
        for (std::size_t w = 0; w < W; ++w) {
          const bool on = raw[idx].ev.mark.test(w);
          const double u = unif(rng);
          child.set(w, on ? u >= p_off : u < p_on);
        }
        const double t = raw[idx].ev.t + delay;
        if (t > t_end) continue;
        Raw r{{}, idx, raw[idx].generation + 1};
        r.ev.t = t;
        r.ev.node = s;
        r.ev.mark = std::move(child);
        raw.push_back(std::move(r));
      }
    }
  }

  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw[a].ev.t < raw[b].ev.t; });
  std::vector<std::size_t> position(raw.size());
  for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;

  std::vector<SimulatedEvent> out;
  out.reserve(raw.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& r = raw[order[k]];
    SimulatedEvent se;
    se.event = std::move(r.ev);
    se.event.post_id = "sim-" + std::to_string(k);
    if (r.parent) se.parent = position[*r.parent];
    se.generation = r.generation;
    out.push_back(std::move(se));
  }
  return out;
}

}  // namespace hbtm
