#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/model.hpp"

namespace hbtm {

/// How omega, p_on and p_off are shared across node pairs. theta is always
/// estimated per pair.
enum class Tying { pair, receiver, global };

Tying parse_tying(std::string_view name);
std::string_view to_string(Tying t);

struct EmConfig {
  double tau_max = 14.0;  // days; kNoTruncation disables the parent window
  double bin_width = 1.0;
  int max_iter = 200;
  double tol = 1e-6;
  Tying tying = Tying::pair;
  ParamBounds bounds;
  std::optional<double> t_start;  // observation window; inferred from data when unset
  std::optional<double> t_end;
  double monotonicity_tol = 1e-8;  // allowed relative likelihood drop per iteration
  double zero_mass = 1e-8;         // attributed mass below which an update is skipped
  double background_floor = 1e-6;  // flat rate for nodes without events at initialization
  int restarts = 0;                // additional jittered starts
  std::uint64_t restart_seed = 0;
  unsigned threads = 1;
};

/// Posterior parent probabilities. Row i holds the spontaneous mass q_ii and
/// q_ij for every candidate parent j: earlier events within the truncation
/// window, in event order.
class BranchingMatrix {
public:
  BranchingMatrix() : offsets_{0} {}

  std::size_t size() const noexcept { return self_.size(); }
  std::size_t nonzeros() const noexcept { return parents_.size() + self_.size(); }

  double self(std::size_t i) const { return self_[i]; }
  std::span<const std::size_t> parents(std::size_t i) const {
    return std::span(parents_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }
  std::span<const double> probs(std::size_t i) const {
    return std::span(probs_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }
  double row_sum(std::size_t i) const;

  /// log lambda(t_i, m_i) for each row, when produced by an E-step.
  std::span<const double> log_intensity() const noexcept { return log_intensity_; }

  void append_row(double self, std::span<const std::size_t> parents, std::span<const double> probs);
  /// Throws DataError unless rows are stochastic and parents precede rows.
  void validate(double tol = 1e-9) const;

  friend bool operator==(const BranchingMatrix&, const BranchingMatrix&) = default;

private:
  friend BranchingMatrix e_step(const ModelParams&, std::span<const MarkedEvent>, double, unsigned);

  std::vector<double> self_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> parents_;
  std::vector<double> probs_;
  std::vector<double> log_intensity_;
};

/// Posterior branching probabilities under `params`, computed in log space.
/// Throws NumericalError if some event has zero intensity.
BranchingMatrix e_step(const ModelParams& params, std::span<const MarkedEvent> events,
                       double tau_max, unsigned threads = 1);

/// Maximizes the expected complete-data log-likelihood given `q`. The
/// observation window is taken from `prev.background`.
ModelParams m_step(std::span<const MarkedEvent> events, const BranchingMatrix& q,
                   const ModelParams& prev, const EmConfig& config);

ModelParams initialize(std::span<const MarkedEvent> events, std::size_t S, std::size_t W,
                       const EmConfig& config);

/// Log-likelihood from an E-step's per-row log intensities.
double log_likelihood_from_estep(const ModelParams& params, std::span<const MarkedEvent> events,
                                 const BranchingMatrix& q, double tau_max);

struct FitReport {
  int iterations = 0;
  std::vector<double> log_likelihood_trace;
  bool converged = false;
  ModelParams final_params;
  BranchingMatrix branching;
};

/// EM from the deterministic initialization (plus optional jittered
/// restarts). Throws NumericalError if the likelihood decreases by more than
/// `monotonicity_tol` relative in any iteration.
FitReport fit(std::span<const MarkedEvent> events, std::size_t S, std::size_t W,
              const EmConfig& config);

}  // namespace hbtm
