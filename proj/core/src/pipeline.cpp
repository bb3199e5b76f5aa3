#include "hbtm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "hbtm/error.hpp"
#include "hbtm/influence.hpp"
#include "hbtm/io.hpp"
#include "hbtm/simulator.hpp"

namespace hbtm {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;

// Files are staged under "<name>.partial" and renamed on commit.
class ArtifactWriter {
public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& content) {
    const fs::path final_path = root_ / rel;
    fs::create_directories(final_path.parent_path());
    fs::remove(final_path);
    std::ofstream out(partial(rel), std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + final_path.string());
    out << content;
    if (!out) throw DataError("write failed for " + final_path.string());
    pending_.push_back(rel);
  }

  template <class Fn>
  void write_with(const std::string& rel, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write(rel, os.str());
  }

  void commit() {
    for (const auto& rel : pending_) {
      fs::rename(partial(rel), root_ / rel);
      committed_.push_back(rel);
    }
    pending_.clear();
  }

  const std::vector<std::string>& committed() const { return committed_; }
  const fs::path& root() const { return root_; }

private:
  fs::path partial(const std::string& rel) const { return root_ / (rel + ".partial"); }

  fs::path root_;
  std::vector<std::string> pending_;
  std::vector<std::string> committed_;
};

template <class Fn>
void run_stage(const std::string& name, ArtifactWriter& out, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError("stage " + name + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("stage " + name + ": " + e.what());
  } catch (const Error& e) {
    throw DataError("stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError("stage " + name + ": " + e.what());
  }
  out.commit();
}

template <class T>
T get_checked(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for config key '" + key + "'");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? sep : "") + parts[k];
  return out;
}

std::vector<std::optional<std::string>> node_attr(const NodeRoster& roster, const std::string& key) {
  std::vector<std::optional<std::string>> out;
  for (const auto& n : roster) {
    auto it = n.attrs.find(key);
    out.push_back(it == n.attrs.end() ? std::nullopt : std::optional(it->second));
  }
  return out;
}

struct Analysis {
  std::optional<ModelParams> params;
};

// Markization, fit, clustering and network construction for one post set.
Analysis analyze(const std::string& label, const std::string& prefix,
                 const std::vector<RawPost>& posts, const Dictionary& dictionary,
                 const NodeRoster& roster, std::size_t min_size, const PipelineConfig& config,
                 ArtifactWriter& out, PipelineResult& result) {
  Analysis analysis;
  MarkedCorpus corpus;
  run_stage(label + "marks", out, [&] {
    corpus = to_marked_events(posts, dictionary, roster);
    out.write_with(prefix + "dictionary.txt", [&](std::ostream& os) { io::write_dictionary(os, dictionary); });
    out.write_with(prefix + "events.jsonl",
                   [&](std::ostream& os) { io::write_marked_events(os, corpus.events); });
    if (!corpus.all_zero.empty())
      result.notes.push_back(label + "marks: " + std::to_string(corpus.all_zero.size()) +
                             " events have no dictionary words");
  });
  if (corpus.events.size() < 2) {
    result.notes.push_back(label + "fit: skipped, fewer than two events");
    return analysis;
  }

  FitReport report;
  run_stage(label + "fit", out, [&] {
    report = fit(corpus.events, roster.size(), dictionary.size(), config.em);
    out.write(prefix + "params.json", io::params_to_json(report.final_params));
    out.write_with(prefix + "branching.jsonl",
                   [&](std::ostream& os) { io::write_branching(os, report.branching); });
    json summary{{"iterations", report.iterations},
                 {"converged", report.converged},
                 {"events", corpus.events.size()},
                 {"nodes", roster.size()},
                 {"dictionary_size", dictionary.size()},
                 {"log_likelihood_trace", report.log_likelihood_trace}};
    out.write(prefix + "fit_report.json", summary.dump(2) + "\n");
  });
  analysis.params = report.final_params;

  run_stage(label + "topics", out, [&] {
    const auto forest = sample_forest(report.branching, config.forest_mode, config.forest_seed);
    ClusterOptions opts;
    opts.min_size = min_size;
    opts.top_k = config.top_k;
    opts.node_attr = node_attr(roster, config.attr_key);
    const auto clusters = extract_clusters(forest, corpus.events, dictionary, opts);
    const auto docs = documents_from_marks(corpus.events, dictionary);
    const auto coherence = cluster_coherence(clusters, docs);
    out.write(prefix + "clusters.json", io::clusters_to_json(clusters, &roster, &coherence));
    const auto timeline = timeline_export(clusters);
    out.write_with(prefix + "timeline.csv",
                   [&](std::ostream& os) { write_timeline_csv(os, timeline, &roster); });
  });

  run_stage(label + "network", out, [&] {
    const auto net = influence_network(report.branching, corpus.events, roster, config.network_threshold);
    out.write(prefix + "network.json", export_graph(net, GraphFormat::json, config.attr_key));
    out.write(prefix + "network.dot", export_graph(net, GraphFormat::dot, config.attr_key));
    out.write(prefix + "network.csv", export_graph(net, GraphFormat::csv, config.attr_key));
    out.write_with(prefix + "rankings.csv", [&](std::ostream& os) { write_rankings_csv(os, net); });
    const auto ranks = degree_rankings(net, config.rank_k);
    json top{{"in_degree", json::array()}, {"out_degree", json::array()}};
    for (const auto& r : ranks.in) top["in_degree"].push_back({{"node", roster[r.node].id}, {"degree", r.degree}});
    for (const auto& r : ranks.out) top["out_degree"].push_back({{"node", roster[r.node].id}, {"degree", r.degree}});
    out.write(prefix + "top_degrees.json", top.dump(2) + "\n");
    const auto activity = activity_decomposition(report.branching, corpus.events, roster.size(),
                                                 &report.final_params);
    out.write_with(prefix + "activity.csv",
                   [&](std::ostream& os) { write_activity_csv(os, activity, roster); });
  });
  return analysis;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 0xF];
  }
  return out;
}

PipelineConfig pipeline_config_from_json(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("pipeline config does not parse: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  PipelineConfig c;
  bool have_input = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "input") {
      c.input = resolve(base_dir, get_checked<std::string>(v, key));
      have_input = true;
    } else if (key == "format") {
      const auto f = get_checked<std::string>(v, key);
      if (f == "jsonl") c.format = InputFormat::jsonl;
      else if (f == "csv") c.format = InputFormat::csv;
      else throw ConfigError("format must be jsonl or csv");
    } else if (key == "epoch") {
      c.epoch = get_checked<std::string>(v, key);
      try {
        parse_epoch(c.epoch);
      } catch (const DataError&) {
        throw ConfigError("epoch must be YYYY-MM-DD");
      }
    } else if (key == "stopwords") {
      c.stopwords = get_checked<std::vector<std::string>>(v, key);
    } else if (key == "stopwords_file") {
      c.stopwords_file = resolve(base_dir, get_checked<std::string>(v, key));
    } else if (key == "output_dir") {
      c.output_dir = resolve(base_dir, get_checked<std::string>(v, key));
    } else if (key == "dict_size") {
      c.dict_size = get_checked<std::size_t>(v, key);
    } else if (key == "seeds") {
      const auto seeds = get_checked<std::vector<std::string>>(v, key);
      c.seeds = {seeds.begin(), seeds.end()};
    } else if (key == "expansion") {
      if (!v.is_object()) throw ConfigError("expansion must be an object");
      for (const auto& [k2, v2] : v.items()) {
        if (k2 == "ratio_min") c.expansion.ratio_min = get_checked<double>(v2, k2);
        else if (k2 == "count_min") c.expansion.count_min = get_checked<std::size_t>(v2, k2);
        else if (k2 == "max_iter") c.expansion.max_iter = get_checked<int>(v2, k2);
        else throw ConfigError("unknown config key 'expansion." + k2 + "'");
      }
    } else if (key == "em") {
      c.em = io::em_config_from_json(v.dump(), c.em);
    } else if (key == "forest_mode") {
      c.forest_mode = parse_forest_mode(get_checked<std::string>(v, key));
    } else if (key == "forest_seed") {
      c.forest_seed = get_checked<std::uint64_t>(v, key);
    } else if (key == "min_cluster_size") {
      c.min_cluster_size = get_checked<std::size_t>(v, key);
    } else if (key == "subtopic_min_cluster_size") {
      c.subtopic_min_cluster_size = get_checked<std::size_t>(v, key);
    } else if (key == "top_k") {
      c.top_k = get_checked<std::size_t>(v, key);
    } else if (key == "network_threshold") {
      c.network_threshold = get_checked<double>(v, key);
    } else if (key == "rank_k") {
      c.rank_k = get_checked<std::size_t>(v, key);
    } else if (key == "attr_key") {
      c.attr_key = get_checked<std::string>(v, key);
    } else if (key == "subtopics") {
      c.subtopics = get_checked<std::vector<std::vector<std::string>>>(v, key);
    } else if (key == "simulate") {
      c.simulate = get_checked<bool>(v, key);
    } else if (key == "simulation_seed") {
      c.simulation_seed = get_checked<std::uint64_t>(v, key);
    } else if (key == "simulation_t_end") {
      c.simulation_t_end = v.is_null() ? std::nullopt : std::optional(get_checked<double>(v, key));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (!have_input) throw ConfigError("config key 'input' is required");
  if (c.dict_size < 2) throw ConfigError("dict_size must be at least 2");
  if (c.rank_k < 1) throw ConfigError("rank_k must be at least 1");
  return c;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  if (!fs::exists(config.input)) throw ConfigError("input file not found: " + config.input.string());
  if (config.stopwords_file && !fs::exists(*config.stopwords_file))
    throw ConfigError("stopword file not found: " + config.stopwords_file->string());
  if (config.dict_size < 2) throw ConfigError("dict_size must be at least 2");

  PipelineResult result;
  fs::create_directories(config.output_dir);
  ArtifactWriter out(config.output_dir);

  StopWords stopwords(config.stopwords.begin(), config.stopwords.end());
  if (config.stopwords_file) {
    auto more = read_stopwords(*config.stopwords_file);
    stopwords.insert(more.begin(), more.end());
  }

  std::vector<RawPost> posts;
  NodeRoster roster;
  run_stage("ingest", out, [&] {
    posts = ingest_posts(config.input, parse_epoch(config.epoch), config.format);
    if (posts.empty()) throw DataError("input contains no posts");
    roster = build_roster(posts);
    out.write_with("posts.jsonl", [&](std::ostream& os) { io::write_posts(os, posts); });
    out.write_with("roster.jsonl", [&](std::ostream& os) { io::write_roster(os, roster); });
  });

  std::vector<RawPost> topical = posts;
  run_stage("expand", out, [&] {
    if (config.seeds.empty()) return;
    const auto expansion = expand_keywords(posts, config.seeds, config.expansion, stopwords);
    if (expansion.no_match) result.notes.push_back("expand: no post contains a seed keyword");
    topical = filter_by_keywords(posts, expansion.keywords);
    std::string words;
    for (const auto& w : expansion.keywords) words += w + "\n";
    out.write("keywords.txt", words);
    if (topical.empty()) throw DataError("no post matches the expanded keyword list");
  });

  Dictionary dictionary;
  run_stage("dictionary", out, [&] { dictionary = build_dictionary(topical, stopwords, config.dict_size); });
  if (dictionary.size() < config.dict_size)
    result.notes.push_back("dictionary: only " + std::to_string(dictionary.size()) +
                           " distinct tokens available");
  if (dictionary.size() == 0) throw DataError("stage dictionary: corpus has no tokens");

  const Analysis full = analyze("", "", topical, dictionary, roster, config.min_cluster_size,
                                config, out, result);

  for (const auto& words : config.subtopics) {
    if (words.empty()) continue;
    const std::string name = join(words, "_");
    const std::string label = "subtopic[" + name + "]/";
    const std::set<std::string> kw(words.begin(), words.end());
    const auto subset = filter_by_keywords(topical, kw);
    // Shared dictionary, restricted to words present in the subset.
    std::set<std::string> vocab;
    for (const auto& p : subset)
      for (auto& tok : tokenize(p.text, {})) vocab.insert(std::move(tok));
    std::vector<std::string> sub_words;
    for (const auto& w : dictionary.words())
      if (vocab.contains(w)) sub_words.push_back(w);
    if (subset.size() < 2 || sub_words.empty()) {
      result.notes.push_back(label + ": skipped, " + std::to_string(subset.size()) + " matching posts");
      continue;
    }
    analyze(label, "subtopics/" + name + "/", subset, Dictionary(sub_words), roster,
            config.subtopic_min_cluster_size, config, out, result);
  }

  if (config.simulate && full.params) {
    run_stage("simulate", out, [&] {
      const double rho = branching_ratio(*full.params);
      if (rho >= 1.0) {
        result.notes.push_back("simulate: skipped, fitted branching ratio " + std::to_string(rho) + " >= 1");
        return;
      }
      const double t_end = config.simulation_t_end.value_or(full.params->background.t_end);
      const auto sim = simulate(*full.params, t_end, config.simulation_seed);
      std::vector<MarkedEvent> events;
      for (const auto& e : sim) events.push_back(e.event);
      out.write_with("simulation/events.jsonl", [&](std::ostream& os) { io::write_marked_events(os, events); });
      out.write_with("simulation/truth.jsonl", [&](std::ostream& os) { io::write_truth(os, sim); });
    });
  }

  json manifest{{"artifacts", json::array()}, {"notes", result.notes}};
  for (const auto& rel : out.committed()) {
    const std::string bytes = io::read_file(config.output_dir / rel);
    Artifact a{rel, sha256_hex(bytes), bytes.size()};
    manifest["artifacts"].push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    result.manifest.push_back(std::move(a));
  }
  std::ofstream mf(config.output_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw DataError("cannot write manifest.json");
  return result;
}

}  // namespace hbtm
