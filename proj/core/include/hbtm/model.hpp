#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/mark.hpp"

namespace hbtm {

inline constexpr double kNoTruncation = std::numeric_limits<double>::infinity();

/// Dense row-major S x S matrix. Pairwise parameters are indexed
/// (receiver, source): entry (s, s') describes events at s triggered by s'.
class SquareMatrix {
public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Piecewise-constant per-node background rate (events per day). Bin k of
/// every node covers [t_start + k*bin_width, t_start + (k+1)*bin_width),
/// the last bin is closed at t_end. The rate is zero outside [t_start, t_end].
struct BackgroundRate {
  double t_start = 0.0;
  double t_end = 1.0;
  double bin_width = 1.0;
  std::vector<std::vector<double>> bins;  // [node][bin]

  /// Zero-filled background with the smallest bin count covering the window.
  static BackgroundRate make(std::size_t nodes, double t_start, double t_end, double bin_width,
                             double fill = 0.0);

  std::size_t nodes() const noexcept { return bins.size(); }
  std::size_t num_bins() const noexcept { return bins.empty() ? 0 : bins.front().size(); }
  bool contains(double t) const noexcept { return t >= t_start && t <= t_end; }
  std::optional<std::size_t> bin_of(double t) const noexcept;
  double bin_begin(std::size_t k) const noexcept { return t_start + bin_width * static_cast<double>(k); }
  double bin_length(std::size_t k) const noexcept;
  double rate(std::size_t s, double t) const noexcept;
  /// Integral of the node's rate over [t_start, min(upto, t_end)].
  double integral(std::size_t s, double upto) const noexcept;

  void validate() const;

  friend bool operator==(const BackgroundRate&, const BackgroundRate&) = default;
};

struct ParamBounds {
  double prob_eps = 1e-6;
  double omega_min = 1e-3;
  double omega_max = 1e3;

  double clip_prob(double p) const noexcept;
  double clip_omega(double w) const noexcept;
};

struct ModelParams {
  std::size_t S = 0;
  std::size_t W = 0;
  BackgroundRate background;
  std::vector<double> p0;  // spontaneous word-on probability per node
  SquareMatrix theta;      // expected offspring at receiver per source event
  SquareMatrix omega;      // exponential decay rate, per day
  SquareMatrix p_on;
  SquareMatrix p_off;

  /// Checks shapes and parameter ranges; throws DomainError on violation.
  void validate(const ParamBounds& bounds = {}) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct OverlapCounts {
  std::size_t w1 = 0;  // on in child, off in parent
  std::size_t w2 = 0;  // off in both
  std::size_t w3 = 0;  // off in child, on in parent
  std::size_t w4 = 0;  // on in both

  std::size_t total() const noexcept { return w1 + w2 + w3 + w4; }
  friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

/// Log-probability of a spontaneous mark under independent Bernoulli(p0) words.
double j0_log_mass(const Mark& mark, double p0);
double j0_log_mass(std::size_t ones, std::size_t W, double p0);

OverlapCounts mark_overlap(const Mark& child, const Mark& parent);

/// Log-probability of a child mark given its parent's: off words switch on
/// with p_on, on words switch off with p_off.
double j1_log_mass(const Mark& child, const Mark& parent, double p_on, double p_off);
double j1_log_mass(const OverlapCounts& c, double p_on, double p_off);

/// Log of the marked conditional intensity at node `s`, time `t`, mark `mark`.
/// History events at or after `t`, or older than `tau_max`, do not contribute.
double log_intensity(const ModelParams& params, std::span<const MarkedEvent> history, double t,
                     const Mark& mark, std::size_t s, double tau_max = kNoTruncation);

double intensity(const ModelParams& params, std::span<const MarkedEvent> history, double t,
                 const Mark& mark, std::size_t s, double tau_max = kNoTruncation);

struct LogLikelihood {
  double value = 0.0;
  /// First event whose intensity is zero; `value` is -inf when set.
  std::optional<std::size_t> zero_intensity_event;
};

/// Point-process log-likelihood over [background.t_start, t_end]. With a
/// finite `tau_max` the kernel is supported on [0, tau_max] and the
/// compensator is truncated to match.
LogLikelihood log_likelihood(const ModelParams& params, std::span<const MarkedEvent> events,
                             double t_end, double tau_max = kNoTruncation);

/// Integrated triggering kernel of one source event: 1 - exp(-omega * min(horizon, tau_max)).
double kernel_mass(double omega, double horizon, double tau_max) noexcept;

}  // namespace hbtm
