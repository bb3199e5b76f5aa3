#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hbtm/corpus.hpp"
#include "hbtm/error.hpp"
#include "hbtm/inference.hpp"
#include "hbtm/influence.hpp"
#include "hbtm/io.hpp"
#include "hbtm/pipeline.hpp"
#include "hbtm/simulator.hpp"
#include "hbtm/topics.hpp"

namespace fs = std::filesystem;
using namespace hbtm;

namespace {

struct Globals {
  std::string config;
  int threads = 1;
  bool verbose = false;
};

Globals g;

void log(const std::string& msg) {
  if (g.verbose) std::cerr << "hbtm: " << msg << "\n";
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

template <class Fn>
void write_out(const std::string& path, Fn&& fn) {
  if (path.empty()) return;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
  if (!out) throw DataError("write failed for " + path);
}

InputFormat parse_format(const std::string& f) {
  if (f == "jsonl") return InputFormat::jsonl;
  if (f == "csv") return InputFormat::csv;
  throw ConfigError("format must be jsonl or csv");
}

std::set<std::string> split_csv_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

StopWords load_stopwords(const std::string& path) {
  return path.empty() ? StopWords{} : read_stopwords(path);
}

std::vector<RawPost> load_posts(const std::string& path) {
  auto in = open_in(path);
  return io::read_posts(in);
}

std::vector<MarkedEvent> load_events(const std::string& path) {
  auto in = open_in(path);
  return io::read_marked_events(in);
}

BranchingMatrix load_branching(const std::string& path) {
  auto in = open_in(path);
  return io::read_branching(in);
}

Dictionary load_dictionary(const std::string& path) {
  auto in = open_in(path);
  return io::read_dictionary(in);
}

NodeRoster load_roster(const std::string& path, std::span<const MarkedEvent> events) {
  if (!path.empty()) {
    auto in = open_in(path);
    return io::read_roster(in);
  }
  std::size_t S = 0;
  for (const auto& e : events) S = std::max(S, e.node + 1);
  NodeRoster roster(S);
  for (std::size_t s = 0; s < S; ++s) roster[s].id = std::to_string(s);
  return roster;
}

std::set<std::string> read_keywords(const std::string& path) {
  std::set<std::string> out;
  auto in = open_in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.insert(line);
  return out;
}

void add_corpus(CLI::App& app) {
  auto* corpus = app.add_subcommand("corpus", "Ingest posts, expand keywords, build marks");
  corpus->require_subcommand(1);

  struct IngestArgs {
    std::string input, format = "jsonl", epoch = "2020-01-01", out = "posts.jsonl", roster;
  };
  auto ingest = std::make_shared<IngestArgs>();
  auto* ing = corpus->add_subcommand("ingest", "Parse raw posts into normalized JSONL");
  ing->add_option("--input", ingest->input, "JSONL or CSV posts")->required();
  ing->add_option("--format", ingest->format, "jsonl or csv");
  ing->add_option("--epoch", ingest->epoch, "Day zero, YYYY-MM-DD");
  ing->add_option("--out", ingest->out, "Normalized posts");
  ing->add_option("--roster", ingest->roster, "Node roster output");
  ing->callback([ingest] {
    const auto posts = ingest_posts(fs::path(ingest->input), parse_epoch(ingest->epoch),
                                    parse_format(ingest->format));
    write_out(ingest->out, [&](std::ostream& os) { io::write_posts(os, posts); });
    write_out(ingest->roster, [&](std::ostream& os) { io::write_roster(os, build_roster(posts)); });
    log("ingested " + std::to_string(posts.size()) + " posts");
  });

  struct ExpandArgs {
    std::string posts, seeds, stopwords, out = "keywords.txt", filtered;
    ExpansionOptions opts;
  };
  auto expand = std::make_shared<ExpandArgs>();
  auto* exp = corpus->add_subcommand("expand", "Grow a keyword list from seed words");
  exp->add_option("--posts", expand->posts, "Normalized posts")->required();
  exp->add_option("--seeds", expand->seeds, "Comma-separated seed keywords")->required();
  exp->add_option("--ratio", expand->opts.ratio_min, "Minimum frequency ratio");
  exp->add_option("--min-count", expand->opts.count_min, "Minimum matched document count");
  exp->add_option("--max-iter", expand->opts.max_iter, "Expansion rounds");
  exp->add_option("--stopwords", expand->stopwords, "Stopword file");
  exp->add_option("--out", expand->out, "Keyword list, one per line");
  exp->add_option("--filtered", expand->filtered, "Posts containing any keyword");
  exp->callback([expand] {
    const auto posts = load_posts(expand->posts);
    const auto result = expand_keywords(posts, split_csv_list(expand->seeds), expand->opts,
                                        load_stopwords(expand->stopwords));
    if (result.no_match) std::cerr << "hbtm: warning: no post contains a seed keyword\n";
    write_out(expand->out, [&](std::ostream& os) {
      for (const auto& w : result.keywords) os << w << "\n";
    });
    write_out(expand->filtered, [&](std::ostream& os) {
      io::write_posts(os, filter_by_keywords(posts, result.keywords));
    });
    log(std::to_string(result.keywords.size()) + " keywords after " +
        std::to_string(result.iterations) + " rounds");
  });

  struct MarksArgs {
    std::string posts, roster, stopwords, keywords, dict_out = "dict.txt", out = "events.jsonl";
    std::size_t dict_size = 425;
  };
  auto marks = std::make_shared<MarksArgs>();
  auto* mk = corpus->add_subcommand("marks", "Build the dictionary and binary marks");
  mk->add_option("--posts", marks->posts, "Normalized posts")->required();
  mk->add_option("--roster", marks->roster, "Roster from ingest; rebuilt from posts if absent");
  mk->add_option("--dict-size", marks->dict_size, "Dictionary size W");
  mk->add_option("--stopwords", marks->stopwords, "Stopword file");
  mk->add_option("--keywords", marks->keywords, "Keep only posts containing one of these");
  mk->add_option("--dict-out", marks->dict_out, "Dictionary output, one word per line");
  mk->add_option("--out", marks->out, "Marked events");
  mk->callback([marks] {
    if (marks->dict_size < 2) throw ConfigError("dict-size must be at least 2");
    auto posts = load_posts(marks->posts);
    NodeRoster roster;
    if (!marks->roster.empty()) {
      auto in = open_in(marks->roster);
      roster = io::read_roster(in);
    } else {
      roster = build_roster(posts);
    }
    if (!marks->keywords.empty()) posts = filter_by_keywords(posts, read_keywords(marks->keywords));
    const auto dict = build_dictionary(posts, load_stopwords(marks->stopwords), marks->dict_size);
    const auto corpus = to_marked_events(posts, dict, roster);
    if (!corpus.all_zero.empty())
      std::cerr << "hbtm: warning: " << corpus.all_zero.size() << " events have no dictionary words\n";
    write_out(marks->dict_out, [&](std::ostream& os) { io::write_dictionary(os, dict); });
    write_out(marks->out, [&](std::ostream& os) { io::write_marked_events(os, corpus.events); });
    log(std::to_string(corpus.events.size()) + " events, W = " + std::to_string(dict.size()));
  });
}

void add_fit(CLI::App& app) {
  struct Args {
    std::string events, dict, roster, out = "params.json", branching = "branching.jsonl", report;
  };
  auto a = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("fit", "Fit the model by EM");
  cmd->add_option("--events", a->events, "Marked events")->required();
  cmd->add_option("--dict", a->dict, "Dictionary")->required();
  cmd->add_option("--roster", a->roster, "Node roster; defaults to max node index + 1 nodes");
  cmd->add_option("--out", a->out, "Fitted parameters");
  cmd->add_option("--branching", a->branching, "Branching probabilities");
  cmd->add_option("--report", a->report, "Iteration log");
  cmd->callback([a] {
    const auto events = load_events(a->events);
    const auto dict = load_dictionary(a->dict);
    const auto roster = load_roster(a->roster, events);
    EmConfig config;
    if (!g.config.empty()) config = io::em_config_from_json(io::read_file(g.config));
    config.threads = g.threads;
    const auto report = fit(events, roster.size(), dict.size(), config);
    write_out(a->out, [&](std::ostream& os) { os << io::params_to_json(report.final_params); });
    write_out(a->branching, [&](std::ostream& os) { io::write_branching(os, report.branching); });
    write_out(a->report, [&](std::ostream& os) {
      nlohmann::json j{{"iterations", report.iterations},
                       {"converged", report.converged},
                       {"log_likelihood_trace", report.log_likelihood_trace}};
      os << j.dump(2) << "\n";
    });
    log(std::to_string(report.iterations) + " iterations, log-likelihood " +
        std::to_string(report.log_likelihood_trace.back()) +
        (report.converged ? "" : " (not converged)"));
  });
}

void add_simulate(CLI::App& app) {
  struct Args {
    std::string params, out = "events.jsonl", truth;
    double t_end = 0.0;
    std::uint64_t seed = 7;
  };
  auto a = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("simulate", "Sample events from fitted or hand-written parameters");
  cmd->add_option("--params", a->params, "Model parameters")->required();
  cmd->add_option("--t-end", a->t_end, "Horizon in days")->required();
  cmd->add_option("--seed", a->seed, "Random seed");
  cmd->add_option("--out", a->out, "Simulated marked events");
  cmd->add_option("--truth", a->truth, "Ground-truth parents");
  cmd->callback([a] {
    const auto params = io::params_from_json(io::read_file(a->params));
    const auto sim = simulate(params, a->t_end, a->seed);
    std::vector<MarkedEvent> events;
    events.reserve(sim.size());
    for (const auto& e : sim) events.push_back(e.event);
    write_out(a->out, [&](std::ostream& os) { io::write_marked_events(os, events); });
    write_out(a->truth, [&](std::ostream& os) { io::write_truth(os, sim); });
    log(std::to_string(sim.size()) + " events simulated");
  });
}

void add_topics(CLI::App& app) {
  struct Args {
    std::string branching, events, dict, roster, mode = "map", out = "clusters.json", timeline;
    std::string attr = "party";
    std::uint64_t seed = 1;
    std::size_t min_size = 11, top_k = 8;
  };
  auto a = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("topics", "Extract topic clusters from a branching forest");
  cmd->add_option("--branching", a->branching, "Branching probabilities")->required();
  cmd->add_option("--events", a->events, "Marked events")->required();
  cmd->add_option("--dict", a->dict, "Dictionary")->required();
  cmd->add_option("--roster", a->roster, "Node roster");
  cmd->add_option("--mode", a->mode, "map or sample");
  cmd->add_option("--seed", a->seed, "Seed for sample mode");
  cmd->add_option("--min-size", a->min_size, "Smallest reported cluster");
  cmd->add_option("--top-k", a->top_k, "Words per cluster");
  cmd->add_option("--attr", a->attr, "Node attribute reported per cluster");
  cmd->add_option("--out", a->out, "Clusters JSON");
  cmd->add_option("--timeline", a->timeline, "Timeline CSV");
  cmd->callback([a] {
    const auto q = load_branching(a->branching);
    const auto events = load_events(a->events);
    const auto dict = load_dictionary(a->dict);
    const auto roster = load_roster(a->roster, events);
    const auto forest = sample_forest(q, parse_forest_mode(a->mode), a->seed);
    ClusterOptions opts;
    opts.min_size = a->min_size;
    opts.top_k = a->top_k;
    for (const auto& n : roster) {
      auto it = n.attrs.find(a->attr);
      opts.node_attr.push_back(it == n.attrs.end() ? std::nullopt : std::optional(it->second));
    }
    const auto clusters = extract_clusters(forest, events, dict, opts);
    const auto coherence = cluster_coherence(clusters, documents_from_marks(events, dict));
    write_out(a->out, [&](std::ostream& os) { os << io::clusters_to_json(clusters, &roster, &coherence); });
    write_out(a->timeline, [&](std::ostream& os) {
      write_timeline_csv(os, timeline_export(clusters), &roster);
    });
    log(std::to_string(clusters.size()) + " clusters of size >= " + std::to_string(a->min_size));
  });
}

void add_network(CLI::App& app) {
  struct Args {
    std::string branching, events, roster, out = "net.json", dot, csv, rankings, activity;
    std::string attr = "party";
    double threshold = 10.0;
    std::size_t k = 3;
  };
  auto a = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("network", "Build the thresholded influence network");
  cmd->add_option("--branching", a->branching, "Branching probabilities")->required();
  cmd->add_option("--events", a->events, "Marked events")->required();
  cmd->add_option("--roster", a->roster, "Node roster");
  cmd->add_option("--threshold", a->threshold, "Drop edges lighter than this");
  cmd->add_option("--top", a->k, "Nodes listed per ranking");
  cmd->add_option("--attr", a->attr, "Node attribute used for DOT colors");
  cmd->add_option("--out", a->out, "Network JSON");
  cmd->add_option("--dot", a->dot, "Graphviz output");
  cmd->add_option("--csv", a->csv, "Edge list CSV");
  cmd->add_option("--rankings", a->rankings, "Degree rankings CSV");
  cmd->add_option("--activity", a->activity, "Per-node activity decomposition CSV");
  cmd->callback([a] {
    const auto q = load_branching(a->branching);
    const auto events = load_events(a->events);
    const auto roster = load_roster(a->roster, events);
    const auto net = influence_network(q, events, roster, a->threshold);
    write_out(a->out, [&](std::ostream& os) { os << export_graph(net, GraphFormat::json, a->attr); });
    write_out(a->dot, [&](std::ostream& os) { os << export_graph(net, GraphFormat::dot, a->attr); });
    write_out(a->csv, [&](std::ostream& os) { os << export_graph(net, GraphFormat::csv, a->attr); });
    write_out(a->rankings, [&](std::ostream& os) { write_rankings_csv(os, net); });
    write_out(a->activity, [&](std::ostream& os) {
      write_activity_csv(os, activity_decomposition(q, events, roster.size()), roster);
    });
    const auto ranks = degree_rankings(net, a->k);
    std::cout << "note: " << kGrangerCaveat << "\n";
    std::cout << net.edges.size() << " edges with weight >= " << net.threshold << "\n";
    for (const auto& r : ranks.out) std::printf("out  %-20s %.4f\n", roster[r.node].id.c_str(), r.degree);
    for (const auto& r : ranks.in) std::printf("in   %-20s %.4f\n", roster[r.node].id.c_str(), r.degree);
  });
}

void add_coherence(CLI::App& app) {
  struct Args {
    std::string clusters, events, dict, out;
    double eps = 1.0;
  };
  auto a = std::make_shared<Args>();
  auto* cmd = app.add_subcommand("coherence", "Score cluster top words by UCI coherence");
  cmd->add_option("--clusters", a->clusters, "Clusters JSON from `hbtm topics`")->required();
  cmd->add_option("--events", a->events, "Marked events used as reference documents")->required();
  cmd->add_option("--dict", a->dict, "Dictionary")->required();
  cmd->add_option("--eps", a->eps, "Smoothing count");
  cmd->add_option("--out", a->out, "Report JSON; stdout if absent");
  cmd->callback([a] {
    const auto clusters = io::clusters_from_json(io::read_file(a->clusters));
    const auto docs = documents_from_marks(load_events(a->events), load_dictionary(a->dict));
    const auto summary = cluster_coherence(clusters, docs, a->eps);
    nlohmann::json j{{"mean_per_cluster", summary.mean_per_cluster},
                     {"pair_pooled", summary.pair_pooled},
                     {"clusters", nlohmann::json::array()}};
    for (const auto& c : summary.per_cluster)
      j["clusters"].push_back({{"value", c.value}, {"pairs", c.pairs}, {"unseen_word", c.unseen_word}});
    if (a->out.empty()) std::cout << j.dump(2) << "\n";
    else write_out(a->out, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
  });
}

void add_pipeline(CLI::App& app) {
  auto out_dir = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("pipeline", "Run every stage from one config (--config)");
  cmd->add_option("--out-dir", *out_dir, "Override the configured output directory");
  cmd->callback([out_dir] {
    if (g.config.empty()) throw ConfigError("pipeline needs --config");
    const fs::path path(g.config);
    auto config = pipeline_config_from_json(io::read_file(path), path.parent_path());
    config.em.threads = g.threads;
    if (!out_dir->empty()) config.output_dir = *out_dir;
    const auto result = run_pipeline(config);
    for (const auto& note : result.notes) std::cerr << "hbtm: " << note << "\n";
    std::cout << "note: " << kGrangerCaveat << "\n";
    std::cout << result.manifest.size() << " artifacts in " << config.output_dir.string() << "\n";
    if (g.verbose)
      for (const auto& a : result.manifest) std::cerr << a.sha256 << "  " << a.path << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network Hawkes binomial topic model"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g.config, "JSON config (EM settings for fit, full config for pipeline)");
  app.add_option("--threads", g.threads, "Worker threads for the E-step")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  add_corpus(app);
  add_fit(app);
  add_simulate(app);
  add_topics(app);
  add_network(app);
  add_coherence(app);
  add_pipeline(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "hbtm: error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "hbtm: error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
