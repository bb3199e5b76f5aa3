#include "hbtm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hbtm/error.hpp"

namespace hbtm {

namespace {

using nlohmann::json;

int parse_int(std::string_view s, std::string_view what, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("bad " + std::string(what) + " in timestamp '" +
                    std::string(whole) + "'");
  return v;
}

std::chrono::sys_days make_date(std::string_view s, std::string_view whole) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw DataError("bad date in timestamp '" + std::string(whole) + "'");
  const int y = parse_int(s.substr(0, 4), "year", whole);
  const int m = parse_int(s.substr(5, 2), "month", whole);
  const int d = parse_int(s.substr(8, 2), "day", whole);
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(whole) + "'");
  return std::chrono::sys_days{ymd};
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with_url(std::string_view chunk) {
  return chunk.starts_with("http://") || chunk.starts_with("https://") ||
         chunk.starts_with("www.");
}

std::string string_field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null())
    throw DataError("missing field " + std::string(key) + " at line " + std::to_string(line));
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number()) return it->dump();
  throw DataError("field " + std::string(key) + " is not a string at line " +
                  std::to_string(line));
}

void check_post(const RawPost& p, std::size_t line) {
  if (p.node_id.empty())
    throw DataError("missing field node_id at line " + std::to_string(line));
  if (!std::isfinite(p.timestamp) || p.timestamp < 0.0)
    throw DataError("timestamp before epoch or not finite at line " + std::to_string(line));
}

RawPost post_from_json(const json& obj, std::chrono::sys_days epoch, std::size_t line) {
  if (!obj.is_object()) throw DataError("record is not an object at line " + std::to_string(line));
  RawPost p;
  p.post_id = string_field(obj, "post_id", line);
  p.node_id = string_field(obj, "node_id", line);
  auto ts = obj.find("timestamp");
  if (ts == obj.end() || ts->is_null())
    throw DataError("missing field timestamp at line " + std::to_string(line));
  try {
    p.timestamp = ts->is_number() ? ts->get<double>()
                                  : parse_timestamp_days(ts->get<std::string>(), epoch);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " at line " + std::to_string(line));
  } catch (const json::exception&) {
    throw DataError("bad timestamp at line " + std::to_string(line));
  }
  auto text = obj.find("text");
  if (text != obj.end() && text->is_string()) p.text = text->get<std::string>();
  else if (text == obj.end() || text->is_null())
    throw DataError("missing field text at line " + std::to_string(line));
  if (auto a = obj.find("attrs"); a != obj.end() && !a->is_null()) {
    if (!a->is_object()) throw DataError("attrs is not an object at line " + std::to_string(line));
    for (auto& [k, v] : a->items())
      p.node_attrs[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  check_post(p, line);
  return p;
}

// RFC 4180 record reader. Returns false at end of input. `line` is advanced
// past every physical line consumed; `start_line` receives the first one.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields,
                     std::size_t& line, std::size_t& start_line) {
  fields.clear();
  std::string buf;
  if (!std::getline(in, buf)) return false;
  ++line;
  start_line = line;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i >= buf.size()) {
      if (quoted) {
        std::string next;
        if (!std::getline(in, next))
          throw DataError("unterminated quoted field starting at line " +
                          std::to_string(start_line));
        ++line;
        field.push_back('\n');
        buf = std::move(next);
        i = 0;
        continue;
      }
      break;
    }
    const char c = buf[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < buf.size() && buf[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
    ++i;
  }
  fields.push_back(std::move(field));
  return true;
}

void sort_posts(std::vector<RawPost>& posts) {
  std::stable_sort(posts.begin(), posts.end(), [](const RawPost& a, const RawPost& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.post_id < b.post_id;
  });
}

std::unordered_set<std::string> token_set(std::string_view text, const StopWords& stop) {
  auto toks = tokenize(text, stop);
  return {toks.begin(), toks.end()};
}

}  // namespace

Dictionary::Dictionary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second)
      throw DataError("duplicate dictionary word '" + words_[i] + "'");
  }
}

std::optional<std::size_t> Dictionary::find(std::string_view w) const {
  auto it = index_.find(std::string(w));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::chrono::sys_days parse_epoch(std::string_view s) { return make_date(s, s); }

double parse_timestamp_days(std::string_view iso, std::chrono::sys_days epoch) {
  if (iso.size() < 10) throw DataError("bad timestamp '" + std::string(iso) + "'");
  const auto day = make_date(iso.substr(0, 10), iso);
  double seconds = 0.0;
  std::string_view rest = iso.substr(10);
  if (!rest.empty()) {
    if (rest[0] != 'T' && rest[0] != ' ')
      throw DataError("bad time separator in timestamp '" + std::string(iso) + "'");
    rest.remove_prefix(1);
    // Time part ends at the zone designator, if any.
    std::size_t zone_at = rest.find_first_of("Z+-");
    std::string_view clock = rest.substr(0, zone_at);
    std::string_view zone = zone_at == std::string_view::npos ? std::string_view{}
                                                             : rest.substr(zone_at);
    if (clock.size() < 5 || clock[2] != ':')
      throw DataError("bad time in timestamp '" + std::string(iso) + "'");
    const int hh = parse_int(clock.substr(0, 2), "hour", iso);
    const int mm = parse_int(clock.substr(3, 2), "minute", iso);
    double ss = 0.0;
    if (clock.size() > 5) {
      if (clock[5] != ':') throw DataError("bad seconds in timestamp '" + std::string(iso) + "'");
      std::string_view sec = clock.substr(6);
      auto [ptr, ec] = std::from_chars(sec.data(), sec.data() + sec.size(), ss);
      if (ec != std::errc{} || ptr != sec.data() + sec.size())
        throw DataError("bad seconds in timestamp '" + std::string(iso) + "'");
    }
    if (hh > 23 || mm > 59 || ss >= 61.0)
      throw DataError("time out of range in timestamp '" + std::string(iso) + "'");
    seconds = hh * 3600.0 + mm * 60.0 + ss;
    if (!zone.empty() && zone != "Z") {
      const int sign = zone[0] == '-' ? -1 : 1;
      zone.remove_prefix(1);
      int zh = 0, zm = 0;
      if (zone.size() == 5 && zone[2] == ':') {
        zh = parse_int(zone.substr(0, 2), "zone", iso);
        zm = parse_int(zone.substr(3, 2), "zone", iso);
      } else if (zone.size() == 4) {
        zh = parse_int(zone.substr(0, 2), "zone", iso);
        zm = parse_int(zone.substr(2, 2), "zone", iso);
      } else if (zone.size() == 2) {
        zh = parse_int(zone, "zone", iso);
      } else {
        throw DataError("bad zone offset in timestamp '" + std::string(iso) + "'");
      }
      seconds -= sign * (zh * 3600.0 + zm * 60.0);
    }
  }
  const auto days = (day - epoch).count();
  return static_cast<double>(days) + seconds / 86400.0;
}

std::vector<RawPost> ingest_posts(std::istream& in, std::chrono::sys_days epoch,
                                  InputFormat format) {
  std::vector<RawPost> posts;
  if (format == InputFormat::jsonl) {
    std::string buf;
    std::size_t line = 0;
    while (std::getline(in, buf)) {
      ++line;
      if (std::all_of(buf.begin(), buf.end(), [](unsigned char c) { return std::isspace(c); }))
        continue;
      json obj;
      try {
        obj = json::parse(buf);
      } catch (const json::parse_error& e) {
        throw DataError("unparseable record at line " + std::to_string(line) + ": " + e.what());
      }
      posts.push_back(post_from_json(obj, epoch, line));
    }
  } else {
    std::vector<std::string> header, fields;
    std::size_t line = 0, start = 0;
    if (!read_csv_record(in, header, line, start)) return posts;
    auto col = [&](const char* name) -> std::optional<std::size_t> {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) return std::nullopt;
      return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_id = col("post_id"), c_ts = col("timestamp"), c_node = col("node_id"),
               c_text = col("text");
    const char* required[] = {"post_id", "timestamp", "node_id", "text"};
    const std::optional<std::size_t> cols[] = {c_id, c_ts, c_node, c_text};
    for (int k = 0; k < 4; ++k)
      if (!cols[k]) throw DataError("missing column " + std::string(required[k]) + " at line 1");
    while (read_csv_record(in, fields, line, start)) {
      if (fields.size() == 1 && fields[0].empty()) continue;
      if (fields.size() != header.size())
        throw DataError("expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()) + " at line " + std::to_string(start));
      RawPost p;
      p.post_id = fields[*c_id];
      p.node_id = fields[*c_node];
      p.text = fields[*c_text];
      if (fields[*c_ts].empty())
        throw DataError("missing field timestamp at line " + std::to_string(start));
      try {
        p.timestamp = parse_timestamp_days(fields[*c_ts], epoch);
      } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " at line " + std::to_string(start));
      }
      // Extra columns become node attributes; an "attrs" column may hold a
      // JSON object.
      for (std::size_t k = 0; k < header.size(); ++k) {
        if (k == *c_id || k == *c_ts || k == *c_node || k == *c_text) continue;
        if (fields[k].empty()) continue;
        if (header[k] == "attrs") {
          try {
            auto obj = json::parse(fields[k]);
            for (auto& [key, v] : obj.items())
              p.node_attrs[key] = v.is_string() ? v.get<std::string>() : v.dump();
          } catch (const json::exception&) {
            throw DataError("attrs column is not a JSON object at line " + std::to_string(start));
          }
        } else {
          p.node_attrs[header[k]] = fields[k];
        }
      }
      check_post(p, start);
      posts.push_back(std::move(p));
    }
  }
  sort_posts(posts);
  return posts;
}

std::vector<RawPost> ingest_posts(const std::filesystem::path& path,
                                  std::chrono::sys_days epoch, InputFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file " + path.string());
  return ingest_posts(in, epoch, format);
}

StopWords read_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword file " + path.string());
  StopWords out;
  std::string w;
  while (in >> w) {
    if (w.starts_with("#")) {
      std::getline(in, w);
      continue;
    }
    out.insert(lower(w));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const StopWords& stopwords) {
  std::vector<std::string> out;
  auto emit = [&](std::string& tok) {
    if (!tok.empty() && !stopwords.contains(tok)) out.push_back(tok);
    tok.clear();
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    const std::string chunk = lower(text.substr(pos, end - pos));
    pos = end;
    if (chunk.empty() || starts_with_url(chunk)) continue;

    std::string tok;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto c = static_cast<unsigned char>(chunk[i]);
      if (c == '@') {
        emit(tok);
        while (i + 1 < chunk.size() &&
               (is_word_byte(static_cast<unsigned char>(chunk[i + 1])) || chunk[i + 1] == '_'))
          ++i;
      } else if (is_word_byte(c)) {
        tok.push_back(static_cast<char>(c));
      } else if (c == '\'' && !tok.empty()) {
        // Contractions: "don't" -> "dont".
      } else if (c == 0xE2 && i + 2 < chunk.size() &&
                 static_cast<unsigned char>(chunk[i + 1]) == 0x80 &&
                 static_cast<unsigned char>(chunk[i + 2]) == 0x99 && !tok.empty()) {
        i += 2;  // typographic apostrophe
      } else {
        emit(tok);
      }
    }
    emit(tok);
  }
  return out;
}

Dictionary build_dictionary(const std::vector<RawPost>& posts, const StopWords& stopwords,
                            std::size_t W) {
  if (W < 1) throw ConfigError("dictionary size must be at least 1");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& p : posts)
    for (auto& tok : tokenize(p.text, stopwords)) ++freq[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > W) ranked.resize(W);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, n] : ranked) words.push_back(w);
  return Dictionary(std::move(words));
}

KeywordExpansion expand_keywords(const std::vector<RawPost>& posts,
                                 const std::set<std::string>& seeds,
                                 const ExpansionOptions& options,
                                 const StopWords& stopwords) {
  if (seeds.empty()) throw ConfigError("keyword expansion needs at least one seed");
  if (!(options.ratio_min > 1.0)) throw ConfigError("ratio_min must exceed 1");
  if (options.max_iter < 1) throw ConfigError("max_iter must be at least 1");

  // Candidate words exclude stop words; query matching uses every token.
  std::vector<std::unordered_set<std::string>> all_tokens, candidates;
  all_tokens.reserve(posts.size());
  candidates.reserve(posts.size());
  std::unordered_map<std::string, std::size_t> df_all;
  for (const auto& p : posts) {
    all_tokens.push_back(token_set(p.text, {}));
    std::unordered_set<std::string> c;
    for (const auto& t : all_tokens.back())
      if (!stopwords.contains(t)) c.insert(t);
    for (const auto& t : c) ++df_all[t];
    candidates.push_back(std::move(c));
  }
  const double n_all = static_cast<double>(posts.size());

  KeywordExpansion result;
  result.keywords = seeds;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    std::unordered_map<std::string, std::size_t> df_matched;
    std::size_t n_matched = 0;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      const bool hit = std::any_of(result.keywords.begin(), result.keywords.end(),
                                   [&](const std::string& k) { return all_tokens[i].contains(k); });
      if (!hit) continue;
      ++n_matched;
      for (const auto& t : candidates[i]) ++df_matched[t];
    }
    if (n_matched == 0) {
      result.no_match = true;
      break;
    }
    result.iterations = iter + 1;
    std::vector<std::string> added;
    for (const auto& [w, count] : df_matched) {
      if (result.keywords.contains(w) || count < options.count_min) continue;
      const double rate_matched = static_cast<double>(count) / static_cast<double>(n_matched);
      const double rate_all = static_cast<double>(df_all[w]) / n_all;
      if (rate_matched / rate_all >= options.ratio_min) added.push_back(w);
    }
    if (added.empty()) break;
    result.keywords.insert(added.begin(), added.end());
  }
  return result;
}

std::vector<RawPost> filter_by_keywords(const std::vector<RawPost>& posts,
                                        const std::set<std::string>& keywords) {
  std::vector<RawPost> out;
  for (const auto& p : posts) {
    for (const auto& tok : tokenize(p.text, {})) {
      if (keywords.contains(tok)) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

NodeRoster build_roster(const std::vector<RawPost>& posts) {
  std::map<std::string, AttrMap> nodes;
  for (const auto& p : posts) {
    auto& attrs = nodes[p.node_id];
    for (const auto& [k, v] : p.node_attrs) attrs.emplace(k, v);
  }
  NodeRoster roster;
  roster.reserve(nodes.size());
  for (auto& [id, attrs] : nodes) roster.push_back({id, std::move(attrs)});
  return roster;
}

MarkedCorpus to_marked_events(const std::vector<RawPost>& posts, const Dictionary& dictionary,
                              const NodeRoster& roster) {
  std::unordered_map<std::string, std::size_t> node_index;
  for (std::size_t s = 0; s < roster.size(); ++s) node_index.emplace(roster[s].id, s);

  std::set<std::string> unknown;
  for (const auto& p : posts)
    if (!node_index.contains(p.node_id)) unknown.insert(p.node_id);
  if (!unknown.empty()) {
    std::string msg = "unknown node ids:";
    for (const auto& u : unknown) msg += " " + u;
    throw DataError(msg);
  }

  std::vector<std::size_t> order(posts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (posts[a].timestamp != posts[b].timestamp) return posts[a].timestamp < posts[b].timestamp;
    return posts[a].post_id < posts[b].post_id;
  });

  MarkedCorpus out;
  out.events.reserve(posts.size());
  for (std::size_t k : order) {
    const auto& p = posts[k];
    MarkedEvent ev;
    ev.t = p.timestamp;
    ev.node = node_index.at(p.node_id);
    ev.post_id = p.post_id;
    ev.mark = Mark(dictionary.size());
    for (const auto& tok : tokenize(p.text, {}))
      if (auto w = dictionary.find(tok)) ev.mark.set(*w);
    if (ev.mark.none()) out.all_zero.push_back(out.events.size());
    out.events.push_back(std::move(ev));
  }
  return out;
}

}  // namespace hbtm
