#include "hbtm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "hbtm/error.hpp"
#include "numeric.hpp"

namespace hbtm {

namespace {

void check_prob(double p, const char* name) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError(std::string(name) + " must lie in (0,1), got " + std::to_string(p));
}

}  // namespace

BackgroundRate BackgroundRate::make(std::size_t nodes, double t_start, double t_end,
                                    double bin_width, double fill) {
  if (!(bin_width > 0.0)) throw ConfigError("bin width must be positive");
  if (!(t_end > t_start)) throw ConfigError("background window must have t_end > t_start");
  const double span = (t_end - t_start) / bin_width;
  auto k = static_cast<std::size_t>(std::ceil(span - 1e-9));
  k = std::max<std::size_t>(k, 1);
  BackgroundRate bg;
  bg.t_start = t_start;
  bg.t_end = t_end;
  bg.bin_width = bin_width;
  bg.bins.assign(nodes, std::vector<double>(k, fill));
  return bg;
}

std::optional<std::size_t> BackgroundRate::bin_of(double t) const noexcept {
  if (!contains(t) || num_bins() == 0) return std::nullopt;
  const auto k = static_cast<std::size_t>(std::floor((t - t_start) / bin_width));
  return std::min(k, num_bins() - 1);
}

double BackgroundRate::bin_length(std::size_t k) const noexcept {
  const double b = bin_begin(k);
  const double e = (k + 1 == num_bins()) ? t_end : std::min(t_end, b + bin_width);
  return std::max(0.0, e - b);
}

double BackgroundRate::rate(std::size_t s, double t) const noexcept {
  auto k = bin_of(t);
  return k ? bins[s][*k] : 0.0;
}

double BackgroundRate::integral(std::size_t s, double upto) const noexcept {
  const double end = std::min(upto, t_end);
  double acc = 0.0;
  for (std::size_t k = 0; k < num_bins(); ++k) {
    const double b = bin_begin(k);
    if (b >= end) break;
    const double e = std::min(b + bin_length(k), end);
    acc += bins[s][k] * (e - b);
  }
  return acc;
}

void BackgroundRate::validate() const {
  if (!(bin_width > 0.0)) throw DomainError("background bin width must be positive");
  if (!(t_end > t_start)) throw DomainError("background window must have t_end > t_start");
  const std::size_t k = num_bins();
  if (k == 0) throw DomainError("background has no bins");
  const double span = (t_end - t_start) / bin_width;
  if (span <= static_cast<double>(k - 1) || span > static_cast<double>(k) + 1e-9)
    throw DomainError("background bins do not cover [t_start, t_end] exactly");
  for (const auto& row : bins) {
    if (row.size() != k) throw DomainError("background nodes have unequal bin counts");
    for (double v : row)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("background rate must be finite and >= 0");
  }
}

double ParamBounds::clip_prob(double p) const noexcept {
  return std::clamp(p, prob_eps, 1.0 - prob_eps);
}

double ParamBounds::clip_omega(double w) const noexcept {
  return std::clamp(w, omega_min, omega_max);
}

void ModelParams::validate(const ParamBounds& bounds) const {
  if (S == 0) throw DomainError("model needs at least one node");
  if (W == 0) throw DomainError("model needs a nonempty dictionary");
  background.validate();
  if (background.nodes() != S) throw DomainError("background node count differs from S");
  if (p0.size() != S) throw DomainError("p0 length differs from S");
  for (const SquareMatrix* m : {&theta, &omega, &p_on, &p_off})
    if (m->size() != S) throw DomainError("pairwise parameter matrix is not S x S");
  // Stored values come from clipping, so compare with a relative slack.
  const double lo = bounds.prob_eps * (1 - 1e-9), hi = 1.0 - lo;
  auto in_prob = [&](double p) { return p >= lo && p <= hi; };
  for (double p : p0)
    if (!in_prob(p)) throw DomainError("p0 outside [eps, 1-eps]");
  for (std::size_t i = 0; i < S * S; ++i) {
    if (!in_prob(p_on.data()[i]) || !in_prob(p_off.data()[i]))
      throw DomainError("p_on/p_off outside [eps, 1-eps]");
    if (!(theta.data()[i] >= 0.0) || !std::isfinite(theta.data()[i]))
      throw DomainError("theta must be finite and >= 0");
    const double w = omega.data()[i];
    if (!(w >= bounds.omega_min * (1 - 1e-9) && w <= bounds.omega_max * (1 + 1e-9)))
      throw DomainError("omega outside [omega_min, omega_max]");
  }
}

double j0_log_mass(std::size_t ones, std::size_t W, double p0) {
  check_prob(p0, "p0");
  return static_cast<double>(ones) * std::log(p0) +
         static_cast<double>(W - ones) * std::log1p(-p0);
}

double j0_log_mass(const Mark& mark, double p0) {
  return j0_log_mass(mark.count(), mark.size(), p0);
}

OverlapCounts mark_overlap(const Mark& child, const Mark& parent) {
  if (child.size() != parent.size())
    throw DataError("mark length mismatch: " + std::to_string(child.size()) + " vs " +
                    std::to_string(parent.size()));
  OverlapCounts c;
  const auto cb = child.blocks();
  const auto pb = parent.blocks();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    c.w4 += static_cast<std::size_t>(std::popcount(cb[k] & pb[k]));
    c.w1 += static_cast<std::size_t>(std::popcount(cb[k] & ~pb[k]));
    c.w3 += static_cast<std::size_t>(std::popcount(~cb[k] & pb[k]));
  }
  c.w2 = child.size() - c.w1 - c.w3 - c.w4;
  return c;
}

double j1_log_mass(const OverlapCounts& c, double p_on, double p_off) {
  check_prob(p_on, "p_on");
  check_prob(p_off, "p_off");
  return static_cast<double>(c.w1) * std::log(p_on) +
         static_cast<double>(c.w2) * std::log1p(-p_on) +
         static_cast<double>(c.w3) * std::log(p_off) +
         static_cast<double>(c.w4) * std::log1p(-p_off);
}

double j1_log_mass(const Mark& child, const Mark& parent, double p_on, double p_off) {
  return j1_log_mass(mark_overlap(child, parent), p_on, p_off);
}

double kernel_mass(double omega, double horizon, double tau_max) noexcept {
  const double h = std::min(horizon, tau_max);
  if (h <= 0.0) return 0.0;
  return -std::expm1(-omega * h);
}

double log_intensity(const ModelParams& params, std::span<const MarkedEvent> history, double t,
                     const Mark& mark, std::size_t s, double tau_max) {
  if (!params.background.contains(t))
    throw DataError("time " + std::to_string(t) + " lies outside the background window");
  if (s >= params.S) throw DataError("node index out of range");
  std::vector<double> terms;
  terms.reserve(history.size() + 1);
  terms.push_back(detail::safe_log(params.background.rate(s, t)) +
                  j0_log_mass(mark, params.p0[s]));
  for (const auto& ev : history) {
    const double dt = t - ev.t;
    if (!(dt > 0.0) || dt > tau_max) continue;
    const std::size_t src = ev.node;
    const double w = params.omega(s, src);
    terms.push_back(detail::safe_log(params.theta(s, src)) + std::log(w) - w * dt +
                    j1_log_mass(mark, ev.mark, params.p_on(s, src), params.p_off(s, src)));
  }
  return detail::log_sum_exp(terms);
}

double intensity(const ModelParams& params, std::span<const MarkedEvent> history, double t,
                 const Mark& mark, std::size_t s, double tau_max) {
  return std::exp(log_intensity(params, history, t, mark, s, tau_max));
}

LogLikelihood log_likelihood(const ModelParams& params, std::span<const MarkedEvent> events,
                             double t_end, double tau_max) {
  LogLikelihood out;
  double sum_log = 0.0;
  std::size_t first = 0;  // oldest event still inside the kernel window
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (ev.t < params.background.t_start || ev.t > t_end)
      throw DataError("event " + std::to_string(i) + " lies outside [t_start, t_end]");
    while (first < i && ev.t - events[first].t > tau_max) ++first;
    const double li =
        log_intensity(params, events.subspan(first, i - first), ev.t, ev.mark, ev.node, tau_max);
    if (li == detail::kNegInf && !out.zero_intensity_event) out.zero_intensity_event = i;
    sum_log += li;
  }
  double compensator = 0.0;
  for (std::size_t s = 0; s < params.S; ++s) compensator += params.background.integral(s, t_end);
  for (const auto& ev : events)
    for (std::size_t s = 0; s < params.S; ++s)
      compensator += params.theta(s, ev.node) *
                     kernel_mass(params.omega(s, ev.node), t_end - ev.t, tau_max);
  out.value = out.zero_intensity_event ? detail::kNegInf : sum_log - compensator;
  return out;
}

}  // namespace hbtm
