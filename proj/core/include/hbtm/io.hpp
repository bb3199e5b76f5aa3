#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/inference.hpp"
#include "hbtm/model.hpp"
#include "hbtm/simulator.hpp"
#include "hbtm/topics.hpp"

namespace hbtm::io {

// Normalized posts: JSONL {post_id, t, node_id, text, attrs}.
void write_posts(std::ostream& out, std::span<const RawPost> posts);
std::vector<RawPost> read_posts(std::istream& in);

// Marked events: JSONL {post_id, t, node, mark: [0/1...]}.
void write_marked_events(std::ostream& out, std::span<const MarkedEvent> events);
std::vector<MarkedEvent> read_marked_events(std::istream& in);

// Dictionary: one word per line, position = line number (0-based).
void write_dictionary(std::ostream& out, const Dictionary& dictionary);
Dictionary read_dictionary(std::istream& in);

// Node roster: JSONL {index, id, attrs}.
void write_roster(std::ostream& out, const NodeRoster& roster);
NodeRoster read_roster(std::istream& in);

// Model parameters as one JSON document. Doubles are written in shortest
// round-trip form, so read(write(p)) == p bit for bit.
std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(std::string_view text);

// Branching matrix: JSONL triplets {i, j, q}, diagonal first in each row,
// rows in event order.
void write_branching(std::ostream& out, const BranchingMatrix& q);
BranchingMatrix read_branching(std::istream& in);

// Simulation ground truth: JSONL {child, parent|null}.
void write_truth(std::ostream& out, std::span<const SimulatedEvent> events);
std::vector<std::optional<std::size_t>> read_truth(std::istream& in);

/// EM settings from a JSON object; unknown keys raise ConfigError.
EmConfig em_config_from_json(std::string_view text, EmConfig base = {});
std::string em_config_to_json(const EmConfig& config);

std::string clusters_to_json(std::span<const TopicCluster> clusters, const NodeRoster* roster,
                             const CoherenceSummary* coherence = nullptr);
std::vector<TopicCluster> clusters_from_json(std::string_view text);

std::string read_file(const std::filesystem::path& path);

}  // namespace hbtm::io
