#include "hbtm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <tuple>

#include <boost/math/tools/roots.hpp>

#include "hbtm/error.hpp"
#include "numeric.hpp"

namespace hbtm {

namespace {

using detail::kNegInf;

std::size_t group_of(Tying tying, std::size_t s, std::size_t src, std::size_t S) {
  switch (tying) {
    case Tying::pair: return s * S + src;
    case Tying::receiver: return s;
    case Tying::global: return 0;
  }
  return 0;
}

std::size_t group_count(Tying tying, std::size_t S) {
  switch (tying) {
    case Tying::pair: return S * S;
    case Tying::receiver: return S;
    case Tying::global: return 1;
  }
  return 1;
}

// Sufficient statistics of the triggering part for one (receiver, source) pair.
struct PairStats {
  double mass = 0.0;     // sum q_ij
  double delay = 0.0;    // sum q_ij (t_i - t_j)
  double on_num = 0.0;   // sum q_ij w1
  double on_den = 0.0;   // sum q_ij (w1 + w2)
  double off_num = 0.0;  // sum q_ij w3
  double off_den = 0.0;  // sum q_ij (w3 + w4)
};

// Integrated kernel sum C(omega) = sum_j (1 - exp(-omega L_j)) over a source
// node's events, with its first two derivatives.
struct KernelSums {
  double c = 0.0, dc = 0.0, d2c = 0.0;
};

KernelSums kernel_sums(std::span<const double> horizons, double omega) {
  KernelSums k;
  for (double L : horizons) {
    const double e = std::exp(-omega * L);
    k.c += -std::expm1(-omega * L);
    k.dc += L * e;
    k.d2c -= L * L * e;
  }
  return k;
}

struct OmegaTerm {
  double mass;
  double delay;
  std::span<const double> horizons;
};

// Profile objective in omega after maximizing each theta in closed form:
// g(omega) = sum_p [n_p log omega - omega D_p - n_p log C_p(omega)].
// g is concave, so its stationary point in [omega_min, omega_max] is found by
// safeguarded Newton on u = log(omega).
double profile_objective(std::span<const OmegaTerm> terms, double omega) {
  double g = 0.0;
  for (const auto& t : terms) {
    const double c = kernel_sums(t.horizons, omega).c;
    g += t.mass * std::log(omega) - omega * t.delay - t.mass * std::log(c);
  }
  return g;
}

std::pair<double, double> profile_slope(std::span<const OmegaTerm> terms, double u) {
  const double omega = std::exp(u);
  double f = 0.0, df = 0.0;
  for (const auto& t : terms) {
    const auto k = kernel_sums(t.horizons, omega);
    const double r = k.dc / k.c;
    f += t.mass - omega * t.delay - t.mass * omega * r;
    const double dr = (k.d2c * k.c - k.dc * k.dc) / (k.c * k.c);
    df += omega * (-t.delay - t.mass * (r + omega * dr));
  }
  return {f, df};
}

double maximize_omega(std::span<const OmegaTerm> terms, double prev, const ParamBounds& b) {
  const double lo = std::log(b.omega_min), hi = std::log(b.omega_max);
  double best;
  if (profile_slope(terms, lo).first <= 0.0) {
    best = b.omega_min;
  } else if (profile_slope(terms, hi).first >= 0.0) {
    best = b.omega_max;
  } else {
    double n = 0.0, d = 0.0;
    for (const auto& t : terms) {
      n += t.mass;
      d += t.delay;
    }
    // Without edge effects the optimum is n/D; start there.
    const double guess = std::clamp(std::log(d > 0.0 ? n / d : b.omega_max), lo, hi);
    std::uintmax_t iters = 200;
    const double u = boost::math::tools::newton_raphson_iterate(
        [&](double x) { return profile_slope(terms, x); }, guess, lo, hi, 50, iters);
    best = b.clip_omega(std::exp(u));
  }
  // Never accept a step that lowers the objective.
  if (prev >= b.omega_min && prev <= b.omega_max &&
      profile_objective(terms, prev) > profile_objective(terms, best))
    return prev;
  return best;
}

std::pair<double, double> window_of(std::span<const MarkedEvent> events, const EmConfig& config) {
  double t_min = events.front().t, t_max = events.front().t;
  for (const auto& e : events) {
    t_min = std::min(t_min, e.t);
    t_max = std::max(t_max, e.t);
  }
  const double t_start = config.t_start.value_or(std::floor(t_min));
  double t_end;
  if (config.t_end) {
    t_end = *config.t_end;
  } else {
    const double bins = std::max(1.0, std::ceil((t_max - t_start) / config.bin_width - 1e-9));
    t_end = t_start + bins * config.bin_width;
  }
  if (t_min < t_start || t_max > t_end)
    throw DataError("events fall outside the observation window [" + std::to_string(t_start) +
                    ", " + std::to_string(t_end) + "]");
  return {t_start, t_end};
}

void check_sorted(std::span<const MarkedEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].t < events[i - 1].t)
      throw DataError("events are not sorted by time at index " + std::to_string(i));
}

double compensator(const ModelParams& params, std::span<const MarkedEvent> events,
                   double tau_max) {
  const double t_end = params.background.t_end;
  double c = 0.0;
  for (std::size_t s = 0; s < params.S; ++s) c += params.background.integral(s, t_end);
  for (const auto& ev : events)
    for (std::size_t s = 0; s < params.S; ++s)
      c += params.theta(s, ev.node) * kernel_mass(params.omega(s, ev.node), t_end - ev.t, tau_max);
  return c;
}

ModelParams jitter(const ModelParams& base, std::mt19937_64& rng, const ParamBounds& b) {
  std::normal_distribution<double> noise(0.0, 0.5);
  ModelParams p = base;
  for (std::size_t s = 0; s < p.S; ++s)
    for (std::size_t r = 0; r < p.S; ++r) {
      p.theta(s, r) *= std::exp(noise(rng));
      p.omega(s, r) = b.clip_omega(p.omega(s, r) * std::exp(noise(rng)));
      p.p_on(s, r) = b.clip_prob(p.p_on(s, r) * std::exp(noise(rng)));
      p.p_off(s, r) = b.clip_prob(p.p_off(s, r) * std::exp(noise(rng)));
    }
  return p;
}

FitReport run_em(std::span<const MarkedEvent> events, ModelParams params, const EmConfig& config) {
  FitReport report;
  BranchingMatrix q = e_step(params, events, config.tau_max, config.threads);
  double ll = log_likelihood_from_estep(params, events, q, config.tau_max);
  report.log_likelihood_trace.push_back(ll);
  for (int it = 1; it <= config.max_iter; ++it) {
    ModelParams next = m_step(events, q, params, config);
    BranchingMatrix next_q = e_step(next, events, config.tau_max, config.threads);
    const double next_ll = log_likelihood_from_estep(next, events, next_q, config.tau_max);
    const double scale = std::max(std::abs(ll), 1e-300);
    if (next_ll < ll - config.monotonicity_tol * scale)
      throw NumericalError("log-likelihood decreased at iteration " + std::to_string(it) + ": " +
                           std::to_string(ll) + " -> " + std::to_string(next_ll));
    report.log_likelihood_trace.push_back(next_ll);
    report.iterations = it;
    params = std::move(next);
    q = std::move(next_q);
    const double change = std::abs(next_ll - ll) / scale;
    ll = next_ll;
    if (change < config.tol) {
      report.converged = true;
      break;
    }
  }
  report.final_params = std::move(params);
  report.branching = std::move(q);
  return report;
}

}  // namespace

Tying parse_tying(std::string_view name) {
  if (name == "pair") return Tying::pair;
  if (name == "receiver") return Tying::receiver;
  if (name == "global") return Tying::global;
  throw ConfigError("unknown tying '" + std::string(name) + "' (expected pair, receiver or global)");
}

std::string_view to_string(Tying t) {
  switch (t) {
    case Tying::pair: return "pair";
    case Tying::receiver: return "receiver";
    case Tying::global: return "global";
  }
  return "pair";
}

double BranchingMatrix::row_sum(std::size_t i) const {
  double s = self_[i];
  for (double p : probs(i)) s += p;
  return s;
}

void BranchingMatrix::append_row(double self, std::span<const std::size_t> parents,
                                 std::span<const double> probs) {
  if (parents.size() != probs.size()) throw DataError("branching row has mismatched lengths");
  self_.push_back(self);
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  probs_.insert(probs_.end(), probs.begin(), probs.end());
  offsets_.push_back(parents_.size());
}

void BranchingMatrix::validate(double tol) const {
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(self_[i] >= 0.0)) throw DataError("negative branching entry in row " + std::to_string(i));
    for (std::size_t j : parents(i))
      if (j >= i) throw DataError("branching row " + std::to_string(i) + " has a later parent");
    for (double p : probs(i))
      if (!(p >= 0.0)) throw DataError("negative branching entry in row " + std::to_string(i));
    if (std::abs(row_sum(i) - 1.0) > tol)
      throw DataError("branching row " + std::to_string(i) + " does not sum to 1");
  }
}

BranchingMatrix e_step(const ModelParams& params, std::span<const MarkedEvent> events,
                       double tau_max, unsigned threads) {
  check_sorted(events);
  const std::size_t N = events.size();
  const std::size_t S = params.S;
  const std::size_t W = params.W;

  // Per-pair constants in log space.
  std::vector<double> log_rate(S * S), a_on(S * S), a_stay_off(S * S), a_off(S * S),
      a_stay_on(S * S), omega(S * S);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < S; ++r) {
      const std::size_t k = s * S + r;
      omega[k] = params.omega(s, r);
      log_rate[k] = detail::safe_log(params.theta(s, r)) + std::log(omega[k]);
      a_on[k] = std::log(params.p_on(s, r));
      a_stay_off[k] = std::log1p(-params.p_on(s, r));
      a_off[k] = std::log(params.p_off(s, r));
      a_stay_on[k] = std::log1p(-params.p_off(s, r));
    }

  // Candidate parents of row i are events first[i] .. i-1 with t_j < t_i.
  std::vector<std::size_t> first(N), count(N);
  {
    std::size_t lo = 0, tie = 0;
    for (std::size_t i = 0; i < N; ++i) {
      if (events[i].mark.size() != W) throw DataError("event mark length differs from W");
      if (events[i].node >= S) throw DataError("event node index out of range");
      while (lo < i && events[i].t - events[lo].t > tau_max) ++lo;
      if (i > 0 && events[i].t != events[i - 1].t) tie = i;
      first[i] = lo;
      count[i] = tie > lo ? tie - lo : 0;
    }
  }

  BranchingMatrix q;
  q.self_.resize(N);
  q.log_intensity_.resize(N);
  q.offsets_.assign(N + 1, 0);
  for (std::size_t i = 0; i < N; ++i) q.offsets_[i + 1] = q.offsets_[i] + count[i];
  q.parents_.resize(q.offsets_[N]);
  q.probs_.resize(q.offsets_[N]);

  std::vector<std::uint8_t> dead(N, 0);
  detail::parallel_for(N, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> terms;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ev = events[i];
      const std::size_t s = ev.node;
      const std::size_t n = count[i];
      terms.assign(n + 1, kNegInf);
      terms[n] = detail::safe_log(params.background.rate(s, ev.t)) +
                 j0_log_mass(ev.mark.count(), W, params.p0[s]);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = first[i] + k;
        const auto& parent = events[j];
        const std::size_t pk = s * S + parent.node;
        const auto c = mark_overlap(ev.mark, parent.mark);
        terms[k] = log_rate[pk] - omega[pk] * (ev.t - parent.t) +
                   static_cast<double>(c.w1) * a_on[pk] + static_cast<double>(c.w2) * a_stay_off[pk] +
                   static_cast<double>(c.w3) * a_off[pk] + static_cast<double>(c.w4) * a_stay_on[pk];
      }
      const double lse = detail::log_sum_exp(terms);
      q.log_intensity_[i] = lse;
      const std::size_t off = q.offsets_[i];
      if (lse == kNegInf) {
        dead[i] = 1;
        continue;
      }
      for (std::size_t k = 0; k < n; ++k) {
        q.parents_[off + k] = first[i] + k;
        q.probs_[off + k] = std::exp(terms[k] - lse);
      }
      q.self_[i] = std::exp(terms[n] - lse);
    }
  });
  for (std::size_t i = 0; i < N; ++i)
    if (dead[i])
      throw NumericalError("event " + std::to_string(i) + " (" + events[i].post_id +
                           ") has zero intensity: no background at t=" +
                           std::to_string(events[i].t) + " and no admissible parent");
  return q;
}

double log_likelihood_from_estep(const ModelParams& params, std::span<const MarkedEvent> events,
                                 const BranchingMatrix& q, double tau_max) {
  double sum = 0.0;
  for (double li : q.log_intensity()) sum += li;
  return sum - compensator(params, events, tau_max);
}

ModelParams m_step(std::span<const MarkedEvent> events, const BranchingMatrix& q,
                   const ModelParams& prev, const EmConfig& config) {
  if (q.size() != events.size()) throw DataError("branching matrix size differs from event count");
  const std::size_t S = prev.S, W = prev.W;
  const auto& bounds = config.bounds;
  const double T = prev.background.t_end;
  ModelParams next = prev;

  // Background histogram and spontaneous word rate.
  auto& bg = next.background;
  for (auto& row : bg.bins) std::fill(row.begin(), row.end(), 0.0);
  std::vector<double> self_mass(S, 0.0), self_words(S, 0.0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    const auto k = bg.bin_of(ev.t);
    if (!k) throw DataError("event " + std::to_string(i) + " lies outside the background window");
    bg.bins[ev.node][*k] += q.self(i);
    self_mass[ev.node] += q.self(i);
    self_words[ev.node] += q.self(i) * static_cast<double>(ev.mark.count());
  }
  for (auto& row : bg.bins)
    for (std::size_t k = 0; k < row.size(); ++k) row[k] /= bg.bin_length(k);
  for (std::size_t s = 0; s < S; ++s)
    if (self_mass[s] >= config.zero_mass)
      next.p0[s] = bounds.clip_prob(self_words[s] / (static_cast<double>(W) * self_mass[s]));

  // Triggering statistics.
  std::vector<PairStats> stats(S * S);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const double p = probs[k];
      if (p == 0.0) continue;
      const auto& par = events[parents[k]];
      const auto c = mark_overlap(ev.mark, par.mark);
      auto& st = stats[ev.node * S + par.node];
      st.mass += p;
      st.delay += p * (ev.t - par.t);
      st.on_num += p * static_cast<double>(c.w1);
      st.on_den += p * static_cast<double>(c.w1 + c.w2);
      st.off_num += p * static_cast<double>(c.w3);
      st.off_den += p * static_cast<double>(c.w3 + c.w4);
    }
  }

  std::vector<std::vector<double>> horizons(S);
  for (const auto& ev : events)
    horizons[ev.node].push_back(std::min(T - ev.t, config.tau_max));

  const std::size_t G = group_count(config.tying, S);
  std::vector<std::vector<std::size_t>> members(G);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < S; ++r) members[group_of(config.tying, s, r, S)].push_back(s * S + r);

  for (const auto& group : members) {
    PairStats pooled;
    std::vector<OmegaTerm> terms;
    for (std::size_t pk : group) {
      const auto& st = stats[pk];
      pooled.mass += st.mass;
      pooled.on_num += st.on_num;
      pooled.on_den += st.on_den;
      pooled.off_num += st.off_num;
      pooled.off_den += st.off_den;
      if (st.mass > 0.0) terms.push_back({st.mass, st.delay, horizons[pk % S]});
    }
    if (pooled.mass < config.zero_mass) continue;  // keep previous omega, p_on, p_off

    // Previous omega counts as a fallback candidate only if the group shares it.
    const double prev_omega = prev.omega.data()[group.front()];
    bool shared = true;
    for (std::size_t pk : group) shared = shared && prev.omega.data()[pk] == prev_omega;
    const double omega =
        maximize_omega(terms, shared ? prev_omega : -1.0, bounds);

    for (std::size_t pk : group) {
      const std::size_t s = pk / S, r = pk % S;
      next.omega(s, r) = omega;
      if (pooled.on_den > 0.0) next.p_on(s, r) = bounds.clip_prob(pooled.on_num / pooled.on_den);
      if (pooled.off_den > 0.0) next.p_off(s, r) = bounds.clip_prob(pooled.off_num / pooled.off_den);
    }
  }

  // theta maximizes n log theta - theta C(omega) for the updated omega.
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t r = 0; r < S; ++r) {
      const double c = kernel_sums(horizons[r], next.omega(s, r)).c;
      if (c > 0.0) next.theta(s, r) = stats[s * S + r].mass / c;
    }
  return next;
}

ModelParams initialize(std::span<const MarkedEvent> events, std::size_t S, std::size_t W,
                       const EmConfig& config) {
  if (events.empty()) throw DataError("cannot fit a model to zero events");
  if (S == 0 || W == 0) throw ConfigError("S and W must be positive");
  const auto [t_start, t_end] = window_of(events, config);
  const auto& b = config.bounds;

  ModelParams p;
  p.S = S;
  p.W = W;
  p.background = BackgroundRate::make(S, t_start, t_end, config.bin_width);
  p.p0.assign(S, b.prob_eps);
  p.theta = SquareMatrix(S, 0.1);
  p.omega = SquareMatrix(S, b.clip_omega(1.0));
  p.p_on = SquareMatrix(S, b.clip_prob(0.05));
  p.p_off = SquareMatrix(S, b.clip_prob(0.5));

  std::vector<double> n(S, 0.0), words(S, 0.0);
  for (const auto& ev : events) {
    if (ev.node >= S) throw DataError("event node index out of range");
    if (ev.mark.size() != W) throw DataError("event mark length differs from W");
    p.background.bins[ev.node][*p.background.bin_of(ev.t)] += 1.0;
    n[ev.node] += 1.0;
    words[ev.node] += static_cast<double>(ev.mark.count());
  }
  for (std::size_t s = 0; s < S; ++s) {
    auto& row = p.background.bins[s];
    if (n[s] == 0.0) {
      std::fill(row.begin(), row.end(), config.background_floor);
      continue;
    }
    for (std::size_t k = 0; k < row.size(); ++k) row[k] /= p.background.bin_length(k);
    p.p0[s] = b.clip_prob(words[s] / (n[s] * static_cast<double>(W)));
  }
  return p;
}

FitReport fit(std::span<const MarkedEvent> events, std::size_t S, std::size_t W,
              const EmConfig& config) {
  if (config.max_iter < 0) throw ConfigError("max_iter must be >= 0");
  if (!(config.tau_max > 0.0)) throw ConfigError("tau_max must be positive");
  check_sorted(events);
  const ModelParams start = initialize(events, S, W, config);
  FitReport best = run_em(events, start, config);
  if (config.restarts > 0) {
    std::mt19937_64 rng(config.restart_seed);
    for (int r = 0; r < config.restarts; ++r) {
      FitReport candidate = run_em(events, jitter(start, rng, config.bounds), config);
      if (candidate.log_likelihood_trace.back() > best.log_likelihood_trace.back())
        best = std::move(candidate);
    }
  }
  return best;
}

}  // namespace hbtm
