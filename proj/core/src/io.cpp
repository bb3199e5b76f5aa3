#include "hbtm/io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hbtm/error.hpp"

namespace hbtm::io {

namespace {

using nlohmann::json;

// Calls fn(obj, line) for every nonblank JSONL line.
template <class Fn>
void for_each_jsonl(std::istream& in, std::string_view what, Fn&& fn) {
  std::string buf;
  std::size_t line = 0;
  while (std::getline(in, buf)) {
    ++line;
    if (buf.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(buf);
    } catch (const json::parse_error&) {
      throw DataError("unparseable " + std::string(what) + " record at line " + std::to_string(line));
    }
    try {
      fn(obj, line);
    } catch (const json::exception& e) {
      throw DataError("malformed " + std::string(what) + " record at line " +
                      std::to_string(line) + ": " + e.what());
    }
  }
}

json matrix_json(const SquareMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.size(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.size(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

SquareMatrix matrix_from(const json& j, std::size_t S, const char* name) {
  if (!j.is_array() || j.size() != S)
    throw DataError(std::string(name) + " must be an S x S array");
  SquareMatrix m(S);
  for (std::size_t r = 0; r < S; ++r) {
    if (!j[r].is_array() || j[r].size() != S)
      throw DataError(std::string(name) + " must be an S x S array");
    for (std::size_t c = 0; c < S; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_posts(std::ostream& out, std::span<const RawPost> posts) {
  for (const auto& p : posts) {
    json j{{"post_id", p.post_id}, {"t", p.timestamp}, {"node_id", p.node_id}, {"text", p.text}};
    if (!p.node_attrs.empty()) j["attrs"] = p.node_attrs;
    out << j.dump() << '\n';
  }
}

std::vector<RawPost> read_posts(std::istream& in) {
  std::vector<RawPost> posts;
  for_each_jsonl(in, "post", [&](const json& j, std::size_t line) {
    RawPost p;
    p.post_id = j.at("post_id").get<std::string>();
    p.timestamp = j.at("t").get<double>();
    p.node_id = j.at("node_id").get<std::string>();
    p.text = j.value("text", std::string{});
    if (j.contains("attrs")) p.node_attrs = j.at("attrs").get<AttrMap>();
    if (p.node_id.empty()) throw DataError("missing field node_id at line " + std::to_string(line));
    posts.push_back(std::move(p));
  });
  return posts;
}

void write_marked_events(std::ostream& out, std::span<const MarkedEvent> events) {
  for (const auto& e : events) {
    json j{{"post_id", e.post_id}, {"t", e.t}, {"node", e.node}, {"mark", e.mark.to_bits()}};
    out << j.dump() << '\n';
  }
}

std::vector<MarkedEvent> read_marked_events(std::istream& in) {
  std::vector<MarkedEvent> events;
  for_each_jsonl(in, "event", [&](const json& j, std::size_t line) {
    MarkedEvent e;
    e.post_id = j.value("post_id", std::string{});
    e.t = j.at("t").get<double>();
    e.node = j.at("node").get<std::size_t>();
    const auto bits = j.at("mark").get<std::vector<std::uint8_t>>();
    for (auto b : bits)
      if (b > 1) throw DataError("mark entries must be 0 or 1 at line " + std::to_string(line));
    e.mark = Mark::from_bits(bits);
    if (!events.empty() && events.front().mark.size() != e.mark.size())
      throw DataError("mark length differs from the first event at line " + std::to_string(line));
    events.push_back(std::move(e));
  });
  return events;
}

void write_dictionary(std::ostream& out, const Dictionary& dictionary) {
  for (const auto& w : dictionary.words()) out << w << '\n';
}

Dictionary read_dictionary(std::istream& in) {
  std::vector<std::string> words;
  std::string w;
  while (std::getline(in, w)) {
    if (!w.empty() && w.back() == '\r') w.pop_back();
    if (w.empty()) continue;
    words.push_back(w);
  }
  return Dictionary(std::move(words));
}

void write_roster(std::ostream& out, const NodeRoster& roster) {
  for (std::size_t s = 0; s < roster.size(); ++s) {
    json j{{"index", s}, {"id", roster[s].id}, {"attrs", roster[s].attrs}};
    out << j.dump() << '\n';
  }
}

NodeRoster read_roster(std::istream& in) {
  NodeRoster roster;
  for_each_jsonl(in, "roster", [&](const json& j, std::size_t line) {
    if (j.value("index", roster.size()) != roster.size())
      throw DataError("roster index out of sequence at line " + std::to_string(line));
    roster.push_back({j.at("id").get<std::string>(), j.value("attrs", AttrMap{})});
  });
  return roster;
}

std::string params_to_json(const ModelParams& p) {
  json j;
  j["S"] = p.S;
  j["W"] = p.W;
  j["bin_width"] = p.background.bin_width;
  j["t_start"] = p.background.t_start;
  j["t_end"] = p.background.t_end;
  j["background"] = p.background.bins;
  j["p0"] = p.p0;
  j["theta"] = matrix_json(p.theta);
  j["omega"] = matrix_json(p.omega);
  j["p_on"] = matrix_json(p.p_on);
  j["p_off"] = matrix_json(p.p_off);
  return j.dump(1) + "\n";
}

ModelParams params_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("parameter file does not parse: ") + e.what());
  }
  try {
    ModelParams p;
    p.S = j.at("S").get<std::size_t>();
    p.W = j.at("W").get<std::size_t>();
    p.background.bin_width = j.at("bin_width").get<double>();
    p.background.t_start = j.at("t_start").get<double>();
    p.background.t_end = j.at("t_end").get<double>();
    p.background.bins = j.at("background").get<std::vector<std::vector<double>>>();
    p.p0 = j.at("p0").get<std::vector<double>>();
    p.theta = matrix_from(j.at("theta"), p.S, "theta");
    p.omega = matrix_from(j.at("omega"), p.S, "omega");
    p.p_on = matrix_from(j.at("p_on"), p.S, "p_on");
    p.p_off = matrix_from(j.at("p_off"), p.S, "p_off");
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed parameter file: ") + e.what());
  }
}

void write_branching(std::ostream& out, const BranchingMatrix& q) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    out << json{{"i", i}, {"j", i}, {"q", q.self(i)}}.dump() << '\n';
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    for (std::size_t k = 0; k < parents.size(); ++k)
      out << json{{"i", i}, {"j", parents[k]}, {"q", probs[k]}}.dump() << '\n';
  }
}

BranchingMatrix read_branching(std::istream& in) {
  BranchingMatrix q;
  std::optional<double> self;
  std::vector<std::size_t> parents;
  std::vector<double> probs;
  std::size_t row = 0;
  auto flush = [&](std::size_t line) {
    if (!self) throw DataError("branching row " + std::to_string(row) +
                               " has no diagonal entry (line " + std::to_string(line) + ")");
    q.append_row(*self, parents, probs);
    self.reset();
    parents.clear();
    probs.clear();
    ++row;
  };
  std::size_t last_line = 0;
  for_each_jsonl(in, "branching", [&](const json& j, std::size_t line) {
    const auto i = j.at("i").get<std::size_t>();
    const auto jj = j.at("j").get<std::size_t>();
    const auto v = j.at("q").get<double>();
    if (i != row) {
      if (i != row + 1 || (!self && parents.empty()))
        throw DataError("branching rows must be contiguous and ordered at line " +
                        std::to_string(line));
      flush(line);
    }
    if (jj == i) {
      if (self) throw DataError("duplicate diagonal entry at line " + std::to_string(line));
      self = v;
    } else if (jj < i) {
      if (!parents.empty() && jj <= parents.back())
        throw DataError("parents must be increasing within a row at line " + std::to_string(line));
      parents.push_back(jj);
      probs.push_back(v);
    } else {
      throw DataError("parent index after child at line " + std::to_string(line));
    }
    last_line = line;
  });
  if (self || !parents.empty()) flush(last_line);
  return q;
}

void write_truth(std::ostream& out, std::span<const SimulatedEvent> events) {
  for (std::size_t k = 0; k < events.size(); ++k) {
    json j{{"child", k}, {"parent", nullptr}};
    if (events[k].parent) j["parent"] = *events[k].parent;
    out << j.dump() << '\n';
  }
}

std::vector<std::optional<std::size_t>> read_truth(std::istream& in) {
  std::vector<std::optional<std::size_t>> out;
  for_each_jsonl(in, "truth", [&](const json& j, std::size_t line) {
    if (j.at("child").get<std::size_t>() != out.size())
      throw DataError("truth records out of order at line " + std::to_string(line));
    const auto& p = j.at("parent");
    out.push_back(p.is_null() ? std::nullopt : std::optional(p.get<std::size_t>()));
  });
  return out;
}

EmConfig em_config_from_json(std::string_view text, EmConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("EM config does not parse: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("EM config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "tau_max_days") c.tau_max = v.is_null() ? kNoTruncation : v.get<double>();
      else if (key == "bin_width_days") c.bin_width = v.get<double>();
      else if (key == "max_iter") c.max_iter = v.get<int>();
      else if (key == "tol") c.tol = v.get<double>();
      else if (key == "tying") c.tying = parse_tying(v.get<std::string>());
      else if (key == "prob_eps") c.bounds.prob_eps = v.get<double>();
      else if (key == "omega_min") c.bounds.omega_min = v.get<double>();
      else if (key == "omega_max") c.bounds.omega_max = v.get<double>();
      else if (key == "t_start") c.t_start = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (key == "t_end") c.t_end = v.is_null() ? std::nullopt : std::optional(v.get<double>());
      else if (key == "monotonicity_tol") c.monotonicity_tol = v.get<double>();
      else if (key == "zero_mass") c.zero_mass = v.get<double>();
      else if (key == "background_floor") c.background_floor = v.get<double>();
      else if (key == "restarts") c.restarts = v.get<int>();
      else if (key == "restart_seed") c.restart_seed = v.get<std::uint64_t>();
      else if (key == "threads") c.threads = v.get<unsigned>();
      else throw ConfigError("unknown EM config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad EM config value: ") + e.what());
  }
  if (!(c.bin_width > 0.0)) throw ConfigError("bin_width_days must be positive");
  if (!(c.tau_max > 0.0)) throw ConfigError("tau_max_days must be positive or null");
  if (!(c.bounds.prob_eps > 0.0 && c.bounds.prob_eps < 0.5)) throw ConfigError("prob_eps must lie in (0, 0.5)");
  if (!(c.bounds.omega_min > 0.0 && c.bounds.omega_min < c.bounds.omega_max))
    throw ConfigError("need 0 < omega_min < omega_max");
  return c;
}

std::string em_config_to_json(const EmConfig& c) {
  json j;
  j["tau_max_days"] = std::isinf(c.tau_max) ? json(nullptr) : json(c.tau_max);
  j["bin_width_days"] = c.bin_width;
  j["max_iter"] = c.max_iter;
  j["tol"] = c.tol;
  j["tying"] = std::string(to_string(c.tying));
  j["prob_eps"] = c.bounds.prob_eps;
  j["omega_min"] = c.bounds.omega_min;
  j["omega_max"] = c.bounds.omega_max;
  j["t_start"] = c.t_start ? json(*c.t_start) : json(nullptr);
  j["t_end"] = c.t_end ? json(*c.t_end) : json(nullptr);
  j["monotonicity_tol"] = c.monotonicity_tol;
  j["zero_mass"] = c.zero_mass;
  j["background_floor"] = c.background_floor;
  j["restarts"] = c.restarts;
  j["restart_seed"] = c.restart_seed;
  j["threads"] = c.threads;
  return j.dump(2) + "\n";
}

std::string clusters_to_json(std::span<const TopicCluster> clusters, const NodeRoster* roster,
                             const CoherenceSummary* coherence) {
  json arr = json::array();
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[k];
    json words = json::array();
    for (const auto& wc : c.top_words) words.push_back({{"word", wc.word}, {"count", wc.count}});
    json j{{"size", c.size},
           {"start_t", c.start_t},
           {"end_t", c.end_t},
           {"dominant_node", c.dominant_node},
           {"top_words", std::move(words)},
           {"dominant_attr", c.dominant_attr ? json(*c.dominant_attr) : json(nullptr)},
           {"events", c.event_indices}};
    if (roster && c.dominant_node < roster->size()) j["dominant_node_id"] = (*roster)[c.dominant_node].id;
    if (coherence && k < coherence->per_cluster.size() && !std::isnan(coherence->per_cluster[k].value))
      j["uci_coherence"] = coherence->per_cluster[k].value;
    arr.push_back(std::move(j));
  }
  json doc{{"clusters", std::move(arr)}};
  if (coherence) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    doc["coherence"] = {{"mean_per_cluster", num(coherence->mean_per_cluster)},
                        {"pair_pooled", num(coherence->pair_pooled)}};
  }
  return doc.dump(2) + "\n";
}

std::vector<TopicCluster> clusters_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("cluster file does not parse: ") + e.what());
  }
  std::vector<TopicCluster> out;
  try {
    for (const auto& j : doc.at("clusters")) {
      TopicCluster c;
      c.size = j.at("size").get<std::size_t>();
      c.start_t = j.at("start_t").get<double>();
      c.end_t = j.at("end_t").get<double>();
      c.dominant_node = j.at("dominant_node").get<std::size_t>();
      if (!j.at("dominant_attr").is_null()) c.dominant_attr = j.at("dominant_attr").get<std::string>();
      for (const auto& w : j.at("top_words"))
        c.top_words.push_back({w.at("word").get<std::string>(), w.at("count").get<std::size_t>()});
      c.event_indices = j.at("events").get<std::vector<std::size_t>>();
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed cluster file: ") + e.what());
  }
  return out;
}

}  // namespace hbtm::io
