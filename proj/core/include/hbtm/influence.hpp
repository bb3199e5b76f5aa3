#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/inference.hpp"
#include "hbtm/model.hpp"

namespace hbtm {

inline constexpr std::string_view kGrangerCaveat =
    "Edge weights measure Granger-causal (predictive) triggering estimated from "
    "timing and content; they do not account for confounding influences.";

struct InfluenceEdge {
  std::size_t from = 0;  // source node
  std::size_t to = 0;    // receiving node
  double weight = 0.0;   // expected number of events at `to` triggered from `from`
  friend bool operator==(const InfluenceEdge&, const InfluenceEdge&) = default;
};

struct InfluenceNetwork {
  NodeRoster nodes;
  SquareMatrix weights;               // (to, from): full attributed mass, never pruned
  std::vector<std::size_t> event_counts;  // events per node
  double threshold = 10.0;
  std::vector<InfluenceEdge> edges;   // positive weights >= threshold, self-loops included

  /// weight(from -> to) / N_to, the share of the receiver's events.
  double normalized_weight(std::size_t from, std::size_t to) const;

  friend bool operator==(const InfluenceNetwork&, const InfluenceNetwork&) = default;
};

/// weight(s' -> s) = sum over events i at s and candidate parents j at s' of q_ij.
InfluenceNetwork influence_network(const BranchingMatrix& q, std::span<const MarkedEvent> events,
                                   const NodeRoster& roster, double threshold = 10.0);

struct RankedNode {
  std::size_t node = 0;
  double degree = 0.0;
  friend bool operator==(const RankedNode&, const RankedNode&) = default;
};

struct DegreeRankings {
  std::vector<RankedNode> in;   // most influenced first
  std::vector<RankedNode> out;  // most influential first
};

/// Weighted in/out degrees over the retained edges, excluding self-loops.
/// Nodes of zero degree are not ranked; ties go to the smaller node index.
DegreeRankings degree_rankings(const InfluenceNetwork& network, std::size_t k);

/// Full in/out degree vectors over retained off-diagonal edges.
std::pair<std::vector<double>, std::vector<double>> weighted_degrees(const InfluenceNetwork& network);

struct NodeActivity {
  std::size_t node = 0;
  std::size_t events = 0;
  double spontaneous_mass = 0.0;      // sum of q_ii over the node's events
  double triggering_influence = 0.0;  // expected direct offspring per event
  double theta_influence = 0.0;       // sum_s theta(s, node), when params are given
  double spontaneous_share = 0.0;     // normalized over nodes
  double influence_share = 0.0;       // normalized over nodes
};

std::vector<NodeActivity> activity_decomposition(const BranchingMatrix& q,
                                                 std::span<const MarkedEvent> events,
                                                 std::size_t S,
                                                 const ModelParams* params = nullptr);

enum class GraphFormat { dot, json, csv };

/// DOT colors nodes by `color_attr`: D -> blue, R -> red, anything else gray.
std::string export_graph(const InfluenceNetwork& network, GraphFormat format,
                         std::string_view color_attr = "party");

InfluenceNetwork network_from_json(std::string_view text);

/// rank,node,in_degree,out_degree for every node, ordered by out-degree.
void write_rankings_csv(std::ostream& out, const InfluenceNetwork& network);

void write_activity_csv(std::ostream& out, std::span<const NodeActivity> activity,
                        const NodeRoster& roster);

}  // namespace hbtm
