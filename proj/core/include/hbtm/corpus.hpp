#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hbtm/mark.hpp"

namespace hbtm {

using StopWords = std::unordered_set<std::string>;
using AttrMap = std::map<std::string, std::string>;

/// One timestamped post before markization. `timestamp` is in fractional
/// days since the ingestion epoch.
struct RawPost {
  std::string post_id;
  double timestamp = 0.0;
  std::string node_id;
  std::string text;
  AttrMap node_attrs;
};

/// Ordered word list with its inverse index. Positions are 0..W-1.
class Dictionary {
public:
  Dictionary() = default;
  explicit Dictionary(std::vector<std::string> words);

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  std::optional<std::size_t> find(std::string_view w) const;

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct MarkedEvent {
  double t = 0.0;
  std::size_t node = 0;
  Mark mark;
  std::string post_id;
};

struct NodeInfo {
  std::string id;
  AttrMap attrs;
  friend bool operator==(const NodeInfo&, const NodeInfo&) = default;
};
using NodeRoster = std::vector<NodeInfo>;

enum class InputFormat { jsonl, csv };

std::chrono::sys_days parse_epoch(std::string_view yyyy_mm_dd);

/// Parses an ISO-8601 date or date-time ("2020-01-02", "2020-01-02T10:30:00Z",
/// "2020-01-02T10:30:00.5+02:00") into fractional days since `epoch`.
double parse_timestamp_days(std::string_view iso, std::chrono::sys_days epoch);

/// Reads posts and returns them sorted by (timestamp, post_id), stable in
/// input order. Malformed records raise DataError naming the line number.
std::vector<RawPost> ingest_posts(std::istream& in, std::chrono::sys_days epoch,
                                  InputFormat format);
std::vector<RawPost> ingest_posts(const std::filesystem::path& path,
                                  std::chrono::sys_days epoch, InputFormat format);

StopWords read_stopwords(const std::filesystem::path& path);

/// Lowercases, drops URLs and @-mentions, keeps hashtag bodies, splits on
/// every non-alphanumeric character (so "covid-19" gives "covid", "19"),
/// joins apostrophe contractions, and removes stop words.
std::vector<std::string> tokenize(std::string_view text, const StopWords& stopwords);

/// The W tokens with the highest total occurrence count; ties go to the
/// lexicographically smaller token. Returns fewer than W words if the corpus
/// has fewer distinct tokens.
Dictionary build_dictionary(const std::vector<RawPost>& posts,
                            const StopWords& stopwords, std::size_t W);

struct ExpansionOptions {
  double ratio_min = 10.0;
  std::size_t count_min = 5;
  int max_iter = 5;
};

struct KeywordExpansion {
  std::set<std::string> keywords;
  int iterations = 0;
  bool no_match = false;  // no post contained a seed word
};

/// Iteratively grows the query list with words whose document rate among
/// matching posts is at least `ratio_min` times their rate in the full corpus.
KeywordExpansion expand_keywords(const std::vector<RawPost>& posts,
                                 const std::set<std::string>& seeds,
                                 const ExpansionOptions& options,
                                 const StopWords& stopwords = {});

/// Posts whose token set intersects `keywords`, in input order.
std::vector<RawPost> filter_by_keywords(const std::vector<RawPost>& posts,
                                        const std::set<std::string>& keywords);

/// Roster of distinct node ids in lexicographic order. Attributes are merged
/// across posts; the first value seen for a key wins.
NodeRoster build_roster(const std::vector<RawPost>& posts);

struct MarkedCorpus {
  std::vector<MarkedEvent> events;
  std::vector<std::size_t> all_zero;  // indices of events with an empty mark
};

/// Binary presence marks over `dictionary`. Output is ordered by
/// (timestamp, post_id) and then input order.
MarkedCorpus to_marked_events(const std::vector<RawPost>& posts,
                              const Dictionary& dictionary,
                              const NodeRoster& roster);

}  // namespace hbtm
