#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "hbtm/error.hpp"
#include "hbtm/topics.hpp"

using namespace hbtm;

namespace {

BranchingMatrix rows(const std::vector<std::vector<double>>& dense) {
  BranchingMatrix q;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    std::vector<std::size_t> parents;
    std::vector<double> probs;
    for (std::size_t j = 0; j < i; ++j) {
      parents.push_back(j);
      probs.push_back(dense[i][j]);
    }
    q.append_row(dense[i][i], parents, probs);
  }
  return q;
}

MarkedEvent event(double t, std::size_t node, std::vector<std::uint8_t> bits) {
  return MarkedEvent{t, node, Mark::from_bits(bits), {}};
}

std::vector<TokenSet> docs(std::initializer_list<std::initializer_list<const char*>> d) {
  std::vector<TokenSet> out;
  for (const auto& words : d) {
    TokenSet s;
    for (const char* w : words) s.insert(w);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Forest, AllSpontaneous) {
  const auto q = rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  for (auto mode : {ForestMode::map, ForestMode::sample})
    for (const auto& p : sample_forest(q, mode, 3).parent_of) EXPECT_FALSE(p);
}

TEST(Forest, MapPicksArgmaxAndEarliestOnTies) {
  const auto q = rows({{1, 0, 0, 0}, {0.9, 0.1, 0, 0}, {0.1, 0.9, 0, 0}, {0.4, 0.4, 0.2, 0}});
  const auto f = sample_forest(q, ForestMode::map);
  EXPECT_FALSE(f.parent_of[0]);
  EXPECT_EQ(f.parent_of[1], std::optional<std::size_t>(0));
  EXPECT_EQ(f.parent_of[2], std::optional<std::size_t>(1));
  EXPECT_EQ(f.parent_of[3], std::optional<std::size_t>(0));
}

TEST(Forest, MapSpontaneousAndTies) {
  EXPECT_EQ(sample_forest(rows({{1, 0}, {0.7, 0.3}}), ForestMode::map).parent_of[1],
            std::optional<std::size_t>(0));
  EXPECT_FALSE(sample_forest(rows({{1, 0}, {0.4, 0.6}}), ForestMode::map).parent_of[1]);
  EXPECT_EQ(sample_forest(rows({{1, 0}, {0.5, 0.5}}), ForestMode::map).parent_of[1],
            std::optional<std::size_t>(0));
}

TEST(Forest, SampleFrequencies) {
  // Row (0.3 spontaneous, 0.7 parent), repeated 10^4 times via seeds.
  const auto q = rows({{1, 0}, {0.7, 0.3}});
  int parent = 0;
  const int n = 10000;
  for (int seed = 0; seed < n; ++seed) parent += sample_forest(q, ForestMode::sample, seed).parent_of[1].has_value();
  const double f = static_cast<double>(parent) / n;
  EXPECT_NEAR(f, 0.7, 3.0 * std::sqrt(0.21 / n));
}

TEST(Forest, SampleDeterministicPerSeed) {
  const auto q = rows({{1, 0, 0}, {0.5, 0.5, 0}, {0.2, 0.3, 0.5}});
  EXPECT_EQ(sample_forest(q, ForestMode::sample, 42), sample_forest(q, ForestMode::sample, 42));
}

TEST(Forest, ParseMode) {
  EXPECT_EQ(parse_forest_mode("map"), ForestMode::map);
  EXPECT_THROW(parse_forest_mode("best"), ConfigError);
}

TEST(Clusters, ChainPlusSingleton) {
  BranchingForest f{{std::nullopt, 0, 1, std::nullopt}};
  const Dictionary dict({"a", "b"});
  const std::vector<MarkedEvent> ev = {event(1, 0, {1, 0}), event(2, 1, {1, 1}), event(3, 1, {0, 1}),
                                       event(4, 0, {1, 0})};
  ClusterOptions opt;
  opt.min_size = 2;
  opt.node_attr = {std::string("D"), std::string("R")};
  const auto cl = extract_clusters(f, ev, dict, opt);
  ASSERT_EQ(cl.size(), 1u);
  EXPECT_EQ(cl[0].event_indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(cl[0].start_t, 1.0);
  EXPECT_EQ(cl[0].end_t, 3.0);
  EXPECT_EQ(cl[0].dominant_node, 1u);
  EXPECT_EQ(cl[0].dominant_attr, std::optional<std::string>("R"));
  ASSERT_EQ(cl[0].top_words.size(), 2u);
  EXPECT_EQ(cl[0].top_words[0], (WordCount{"a", 2}));
  EXPECT_EQ(cl[0].top_words[1], (WordCount{"b", 2}));
}

TEST(Clusters, DominantNodeTieGoesToSmallerIndex) {
  BranchingForest f{{std::nullopt, 0}};
  const Dictionary dict({"a"});
  const auto cl = extract_clusters(f, std::vector<MarkedEvent>{event(0, 3, {1}), event(1, 1, {0})}, dict, {});
  ASSERT_EQ(cl.size(), 1u);
  EXPECT_EQ(cl[0].dominant_node, 1u);
}

TEST(Clusters, PartitionAndRelabelInvariance) {
  BranchingForest f{{std::nullopt, 0, std::nullopt, 2, 1, std::nullopt, 5}};
  const auto labels = component_labels(f);
  std::map<std::size_t, std::size_t> sizes;
  for (auto l : labels) ++sizes[l];
  std::multiset<std::size_t> ref;
  for (auto& [l, n] : sizes) ref.insert(n);
  EXPECT_EQ(ref, (std::multiset<std::size_t>{3, 2, 2}));
  // Interleave the trees; parents still precede children.
  const std::vector<std::size_t> to = {2, 5, 0, 3, 6, 1, 4};
  BranchingForest g;
  g.parent_of.resize(to.size());
  for (std::size_t i = 0; i < to.size(); ++i)
    if (f.parent_of[i]) g.parent_of[to[i]] = to[*f.parent_of[i]];
  std::map<std::size_t, std::size_t> gs;
  for (auto l : component_labels(g)) ++gs[l];
  std::multiset<std::size_t> got;
  for (auto& [l, n] : gs) got.insert(n);
  EXPECT_EQ(got, ref);
}

TEST(Coherence, AlwaysTogether) {
  const auto d = docs({{"a", "b"}, {"a", "b"}, {"a", "b"}, {"a", "b"}});
  const std::vector<std::string> w = {"a", "b"};
  EXPECT_NEAR(uci_coherence(w, d).value, std::log(5.0 / 4.0), 1e-12);
}

TEST(Coherence, NeverTogether) {
  const auto d = docs({{"a"}, {"a"}, {"b"}, {"b"}, {"a"}, {"b"}});
  const std::vector<std::string> w = {"a", "b"};
  EXPECT_NEAR(uci_coherence(w, d).value, std::log(4.0 / 6.0), 1e-12);
}

TEST(Coherence, UnseenWordFlagged) {
  const auto d = docs({{"a"}, {"a", "b"}});
  const std::vector<std::string> w = {"a", "zzz"};
  const auto c = uci_coherence(w, d);
  EXPECT_TRUE(c.unseen_word);
  EXPECT_NEAR(c.value, std::log(1.0 * 2 / (2 * 1)), 1e-12);
}

TEST(Coherence, PermutationInvariantAndMonotone) {
  const auto d = docs({{"a", "b", "c"}, {"a", "b"}, {"a", "b", "c"}, {"d"}, {"d", "c"}, {"x"}});
  const std::vector<std::string> w1 = {"a", "b", "c"}, w2 = {"c", "a", "b"};
  EXPECT_NEAR(uci_coherence(w1, d).value, uci_coherence(w2, d).value, 1e-14);
  EXPECT_EQ(uci_coherence(w1, d).pairs, 3u);
  // Replace an always-co-occurring word with one that never co-occurs.
  const std::vector<std::string> good = {"a", "b"}, bad = {"a", "d"};
  EXPECT_GT(uci_coherence(good, d).value, uci_coherence(bad, d).value);
}

TEST(Coherence, Preconditions) {
  const auto d = docs({{"a"}});
  const std::vector<std::string> one = {"a"}, two = {"a", "b"};
  EXPECT_THROW(uci_coherence(one, d), DataError);
  EXPECT_THROW(uci_coherence(two, {}), DataError);
}

TEST(Coherence, BothAggregations) {
  const auto d = docs({{"a", "b"}, {"a", "b"}, {"c"}, {"d"}});
  TopicCluster c1, c2;
  c1.top_words = {{"a", 2}, {"b", 2}};
  c2.top_words = {{"a", 1}, {"c", 1}, {"d", 1}};
  const std::vector<TopicCluster> cl = {c1, c2};
  const auto s = cluster_coherence(cl, d);
  ASSERT_EQ(s.per_cluster.size(), 2u);
  const double v1 = std::log(3.0 * 4 / 4), v2 = (std::log(4.0 / 2) * 2 + std::log(4.0)) / 3;
  EXPECT_NEAR(s.per_cluster[0].value, v1, 1e-12);
  EXPECT_NEAR(s.per_cluster[1].value, v2, 1e-12);
  EXPECT_NEAR(s.mean_per_cluster, (v1 + v2) / 2, 1e-12);
  EXPECT_NEAR(s.pair_pooled, (v1 + 3 * v2) / 4, 1e-12);
}

TEST(Timeline, MidpointsSortedAndCsv) {
  TopicCluster a, b;
  a.start_t = 40;
  a.end_t = 45;
  a.size = 17;
  a.top_words = {{"risk", 3}, {"test", 2}};
  b.start_t = 1;
  b.end_t = 2;
  b.size = 2;
  const std::vector<TopicCluster> cl = {a, b};
  const auto recs = timeline_export(cl);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].midpoint_t, 1.5);
  EXPECT_EQ(recs[1].midpoint_t, 42.5);
  EXPECT_EQ(recs[1].size, 17u);
  std::ostringstream os;
  write_timeline_csv(os, recs);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "midpoint_t,size,words,dominant_node,dominant_attr");
  EXPECT_NE(os.str().find("risk;test"), std::string::npos);
}

TEST(Timeline, EmptyHasHeader) {
  std::ostringstream os;
  write_timeline_csv(os, timeline_export({}));
  EXPECT_EQ(os.str(), "midpoint_t,size,words,dominant_node,dominant_attr\n");
}

TEST(Documents, FromMarks) {
  const Dictionary dict({"a", "b", "c"});
  const auto d = documents_from_marks(std::vector<MarkedEvent>{event(0, 0, {1, 0, 1})}, dict);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], (TokenSet{"a", "c"}));
}
