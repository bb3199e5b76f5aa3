#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hbtm/corpus.hpp"
#include "hbtm/inference.hpp"

namespace hbtm {

/// parent_of[i] is the sampled parent of event i, or nullopt if spontaneous.
struct BranchingForest {
  std::vector<std::optional<std::size_t>> parent_of;
  friend bool operator==(const BranchingForest&, const BranchingForest&) = default;
};

enum class ForestMode { sample, map };
ForestMode parse_forest_mode(std::string_view name);

/// `sample` draws each row's parent from its categorical distribution (one
/// uniform draw per row, in row order); `map` takes the row argmax with ties
/// going to the earliest candidate, so a parent beats spontaneity on a tie.
BranchingForest sample_forest(const BranchingMatrix& q, ForestMode mode, std::uint64_t seed = 0);

struct WordCount {
  std::string word;
  std::size_t count = 0;
  friend bool operator==(const WordCount&, const WordCount&) = default;
};

struct TopicCluster {
  std::vector<std::size_t> event_indices;  // ascending
  double start_t = 0.0;
  double end_t = 0.0;
  std::size_t size = 0;
  std::vector<WordCount> top_words;  // by within-cluster document frequency
  std::size_t dominant_node = 0;
  std::optional<std::string> dominant_attr;

  friend bool operator==(const TopicCluster&, const TopicCluster&) = default;
};

struct ClusterOptions {
  std::size_t min_size = 2;
  std::size_t top_k = 8;
  /// Per-node attribute value used for dominant_attr (e.g. party), if any.
  std::vector<std::optional<std::string>> node_attr;
};

/// Connected components of the parent relation with at least `min_size`
/// events, ordered by start time.
std::vector<TopicCluster> extract_clusters(const BranchingForest& forest,
                                           std::span<const MarkedEvent> events,
                                           const Dictionary& dictionary,
                                           const ClusterOptions& options);

/// Component id per event before any size filtering.
std::vector<std::size_t> component_labels(const BranchingForest& forest);

using TokenSet = std::unordered_set<std::string>;

struct Coherence {
  double value = 0.0;
  std::size_t pairs = 0;
  bool unseen_word = false;  // some top word occurs in no document
};

/// Mean over unordered word pairs of
///   log[(D(a,b) + eps) * D / (max(D(a),1) * max(D(b),1))]
/// with document-level co-occurrence counts.
Coherence uci_coherence(std::span<const std::string> top_words,
                        std::span<const TokenSet> documents, double eps = 1.0);

/// Documents made of each event's dictionary words.
std::vector<TokenSet> documents_from_marks(std::span<const MarkedEvent> events,
                                           const Dictionary& dictionary);

struct CoherenceSummary {
  std::vector<Coherence> per_cluster;
  double mean_per_cluster = 0.0;  // unweighted mean of cluster scores
  double pair_pooled = 0.0;       // mean over all word pairs of all clusters
};

CoherenceSummary cluster_coherence(std::span<const TopicCluster> clusters,
                                   std::span<const TokenSet> documents, double eps = 1.0);

struct TimelineRecord {
  double midpoint_t = 0.0;
  std::size_t size = 0;
  std::vector<std::string> words;
  std::size_t dominant_node = 0;
  std::optional<std::string> dominant_attr;
};

/// One record per cluster, sorted by midpoint time.
std::vector<TimelineRecord> timeline_export(std::span<const TopicCluster> clusters);

/// CSV with header midpoint_t,size,words,dominant_node,dominant_attr. Node
/// indices are written as roster ids when a roster is given.
void write_timeline_csv(std::ostream& out, std::span<const TimelineRecord> records,
                        const NodeRoster* roster = nullptr);

}  // namespace hbtm
