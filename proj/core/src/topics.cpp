#include "hbtm/topics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <unordered_map>

#include "hbtm/error.hpp"

namespace hbtm {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

ForestMode parse_forest_mode(std::string_view name) {
  if (name == "sample") return ForestMode::sample;
  if (name == "map") return ForestMode::map;
  throw ConfigError("unknown forest mode '" + std::string(name) + "' (expected map or sample)");
}

BranchingForest sample_forest(const BranchingMatrix& q, ForestMode mode, std::uint64_t seed) {
  BranchingForest forest;
  forest.parent_of.resize(q.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    std::optional<std::size_t> chosen;
    if (mode == ForestMode::map) {
      double best = q.self(i);
      // Strict comparison against the running best keeps the earliest
      // parent on ties; a parent equal to the spontaneous mass still wins.
      bool parent_wins = false;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (probs[k] > best || (!parent_wins && probs[k] == best)) {
          best = probs[k];
          chosen = parents[k];
          parent_wins = true;
        }
      }
    } else {
      double u = unif(rng) * q.row_sum(i);
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (u < probs[k]) {
          chosen = parents[k];
          break;
        }
        u -= probs[k];
      }
    }
    forest.parent_of[i] = chosen;
  }
  return forest;
}

std::vector<std::size_t> component_labels(const BranchingForest& forest) {
  const std::size_t N = forest.parent_of.size();
  std::vector<std::size_t> root(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& p = forest.parent_of[i];
    if (p && *p >= i) throw DataError("forest parent does not precede event " + std::to_string(i));
    root[i] = p ? root[*p] : i;
  }
  // Dense ids in order of first appearance.
  std::unordered_map<std::size_t, std::size_t> dense;
  std::vector<std::size_t> label(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto [it, fresh] = dense.emplace(root[i], dense.size());
    label[i] = it->second;
  }
  return label;
}

std::vector<TopicCluster> extract_clusters(const BranchingForest& forest,
                                           std::span<const MarkedEvent> events,
                                           const Dictionary& dictionary,
                                           const ClusterOptions& options) {
  if (forest.parent_of.size() != events.size())
    throw DataError("forest and event list differ in length");
  const auto label = component_labels(forest);
  const std::size_t n_comp = label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::vector<std::size_t>> members(n_comp);
  for (std::size_t i = 0; i < events.size(); ++i) members[label[i]].push_back(i);

  std::vector<TopicCluster> out;
  for (auto& idx : members) {
    if (idx.size() < std::max<std::size_t>(options.min_size, 1)) continue;
    TopicCluster c;
    c.size = idx.size();
    c.start_t = events[idx.front()].t;
    c.end_t = events[idx.front()].t;
    std::vector<std::size_t> word_df(dictionary.size(), 0);
    std::map<std::size_t, std::size_t> node_count;
    std::map<std::string, std::size_t> attr_count;
    for (std::size_t i : idx) {
      const auto& ev = events[i];
      c.start_t = std::min(c.start_t, ev.t);
      c.end_t = std::max(c.end_t, ev.t);
      for (std::size_t w = 0; w < ev.mark.size() && w < word_df.size(); ++w)
        if (ev.mark.test(w)) ++word_df[w];
      ++node_count[ev.node];
      if (ev.node < options.node_attr.size() && options.node_attr[ev.node])
        ++attr_count[*options.node_attr[ev.node]];
    }
    std::vector<std::size_t> order;
    for (std::size_t w = 0; w < word_df.size(); ++w)
      if (word_df[w] > 0) order.push_back(w);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (word_df[a] != word_df[b]) return word_df[a] > word_df[b];
      return dictionary.word(a) < dictionary.word(b);
    });
    if (order.size() > options.top_k) order.resize(options.top_k);
    for (std::size_t w : order) c.top_words.push_back({dictionary.word(w), word_df[w]});

    // std::map iterates in key order, so strict > keeps the smallest key on ties.
    std::size_t best = 0;
    for (auto [node, n] : node_count)
      if (n > best) {
        best = n;
        c.dominant_node = node;
      }
    best = 0;
    for (const auto& [value, n] : attr_count)
      if (n > best) {
        best = n;
        c.dominant_attr = value;
      }
    c.event_indices = std::move(idx);
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const TopicCluster& a, const TopicCluster& b) {
    if (a.start_t != b.start_t) return a.start_t < b.start_t;
    return a.event_indices.front() < b.event_indices.front();
  });
  return out;
}

Coherence uci_coherence(std::span<const std::string> top_words,
                        std::span<const TokenSet> documents, double eps) {
  if (top_words.size() < 2) throw DataError("coherence needs at least two words");
  if (documents.empty()) throw DataError("coherence needs at least one document");
  const auto D = static_cast<double>(documents.size());
  const std::size_t k = top_words.size();
  std::vector<double> df(k, 0.0);
  std::vector<double> co(k * k, 0.0);
  std::vector<std::size_t> present;
  for (const auto& doc : documents) {
    present.clear();
    for (std::size_t a = 0; a < k; ++a)
      if (doc.contains(top_words[a])) present.push_back(a);
    for (std::size_t x = 0; x < present.size(); ++x) {
      df[present[x]] += 1.0;
      for (std::size_t y = x + 1; y < present.size(); ++y) co[present[x] * k + present[y]] += 1.0;
    }
  }
  Coherence c;
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    if (df[a] == 0.0) c.unseen_word = true;
    for (std::size_t b = a + 1; b < k; ++b) {
      total += std::log((co[a * k + b] + eps) * D / (std::max(df[a], 1.0) * std::max(df[b], 1.0)));
      ++c.pairs;
    }
  }
  c.value = total / static_cast<double>(c.pairs);
  return c;
}

std::vector<TokenSet> documents_from_marks(std::span<const MarkedEvent> events,
                                           const Dictionary& dictionary) {
  std::vector<TokenSet> docs;
  docs.reserve(events.size());
  for (const auto& ev : events) {
    TokenSet doc;
    for (std::size_t w = 0; w < ev.mark.size() && w < dictionary.size(); ++w)
      if (ev.mark.test(w)) doc.insert(dictionary.word(w));
    docs.push_back(std::move(doc));
  }
  return docs;
}

CoherenceSummary cluster_coherence(std::span<const TopicCluster> clusters,
                                   std::span<const TokenSet> documents, double eps) {
  CoherenceSummary out;
  double sum = 0.0, pair_sum = 0.0;
  std::size_t scored = 0, pairs = 0;
  for (const auto& c : clusters) {
    if (c.top_words.size() < 2) {
      out.per_cluster.push_back({std::nan(""), 0, false});
      continue;
    }
    std::vector<std::string> words;
    for (const auto& wc : c.top_words) words.push_back(wc.word);
    auto coh = uci_coherence(words, documents, eps);
    sum += coh.value;
    pair_sum += coh.value * static_cast<double>(coh.pairs);
    pairs += coh.pairs;
    ++scored;
    out.per_cluster.push_back(coh);
  }
  out.mean_per_cluster = scored ? sum / static_cast<double>(scored) : std::nan("");
  out.pair_pooled = pairs ? pair_sum / static_cast<double>(pairs) : std::nan("");
  return out;
}

std::vector<TimelineRecord> timeline_export(std::span<const TopicCluster> clusters) {
  std::vector<TimelineRecord> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) {
    TimelineRecord r;
    r.midpoint_t = 0.5 * (c.start_t + c.end_t);
    r.size = c.size;
    for (const auto& wc : c.top_words) r.words.push_back(wc.word);
    r.dominant_node = c.dominant_node;
    r.dominant_attr = c.dominant_attr;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const TimelineRecord& a, const TimelineRecord& b) {
    return a.midpoint_t < b.midpoint_t;
  });
  return out;
}

void write_timeline_csv(std::ostream& out, std::span<const TimelineRecord> records,
                        const NodeRoster* roster) {
  out << "midpoint_t,size,words,dominant_node,dominant_attr\n";
  for (const auto& r : records) {
    std::string words;
    for (std::size_t k = 0; k < r.words.size(); ++k) words += (k ? ";" : "") + r.words[k];
    const std::string node = roster && r.dominant_node < roster->size()
                                 ? (*roster)[r.dominant_node].id
                                 : std::to_string(r.dominant_node);
    out << std::fixed << std::setprecision(6) << r.midpoint_t << ',' << r.size << ','
        << csv_field(words) << ',' << csv_field(node) << ',' << csv_field(r.dominant_attr.value_or(""))
        << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace hbtm
