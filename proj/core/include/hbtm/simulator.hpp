#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/model.hpp"

namespace hbtm {

struct SimulatedEvent {
  MarkedEvent event;
  std::optional<std::size_t> parent;  // index into the returned (time-sorted) list
  int generation = 0;
};

/// Spectral radius of theta by power iteration on theta + I. Returns the
/// Collatz-Wielandt upper bound if the iteration has not met `tol`.
double branching_ratio(const ModelParams& params, double tol = 1e-8, int max_iter = 100000);

/// Cluster-process simulation on [background.t_start, t_end].
///
/// Draw order for a given seed (std::mt19937_64):
///   1. immigrants: node by node, bin by bin, a Poisson count for the bin's
///      mass, then for each immigrant a uniform time in the bin followed by
///      W Bernoulli(p0) word draws;
///   2. offspring: events in creation order; for each receiver node a
///      Poisson(theta) count, then per child an exponential delay followed
///      by W word-flip draws. Children past t_end are drawn and discarded.
/// The result is sorted by time (ties by creation order).
std::vector<SimulatedEvent> simulate(const ModelParams& params, double t_end, std::uint64_t seed);

}  // namespace hbtm
