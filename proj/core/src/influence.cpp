#include "hbtm/influence.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hbtm/error.hpp"

namespace hbtm {

namespace {

using nlohmann::json;

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string node_color(const NodeInfo& n, std::string_view attr) {
  auto it = n.attrs.find(std::string(attr));
  if (it == n.attrs.end()) return "gray";
  if (it->second == "D") return "blue";
  if (it->second == "R") return "red";
  return "gray";
}

std::vector<RankedNode> top_k(const std::vector<double>& degree, std::size_t k) {
  std::vector<RankedNode> ranked;
  for (std::size_t s = 0; s < degree.size(); ++s)
    if (degree[s] > 0.0) ranked.push_back({s, degree[s]});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedNode& a, const RankedNode& b) { return a.degree > b.degree; });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace

double InfluenceNetwork::normalized_weight(std::size_t from, std::size_t to) const {
  const auto n = event_counts.at(to);
  return n ? weights(to, from) / static_cast<double>(n) : 0.0;
}

InfluenceNetwork influence_network(const BranchingMatrix& q, std::span<const MarkedEvent> events,
                                   const NodeRoster& roster, double threshold) {
  if (q.size() != events.size()) throw DataError("branching matrix size differs from event count");
  const std::size_t S = roster.size();
  InfluenceNetwork net;
  net.nodes = roster;
  net.threshold = threshold;
  net.weights = SquareMatrix(S, 0.0);
  net.event_counts.assign(S, 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::size_t to = events[i].node;
    if (to >= S) throw DataError("event node index outside the roster");
    ++net.event_counts[to];
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    for (std::size_t k = 0; k < parents.size(); ++k)
      net.weights(to, events[parents[k]].node) += probs[k];
  }
  for (std::size_t from = 0; from < S; ++from)
    for (std::size_t to = 0; to < S; ++to) {
      const double w = net.weights(to, from);
      if (w > 0.0 && w >= threshold) net.edges.push_back({from, to, w});
    }
  return net;
}

std::pair<std::vector<double>, std::vector<double>> weighted_degrees(const InfluenceNetwork& network) {
  const std::size_t S = network.nodes.size();
  std::vector<double> in(S, 0.0), out(S, 0.0);
  for (const auto& e : network.edges) {
    if (e.from == e.to) continue;
    out[e.from] += e.weight;
    in[e.to] += e.weight;
  }
  return {in, out};
}

DegreeRankings degree_rankings(const InfluenceNetwork& network, std::size_t k) {
  if (k < 1) throw ConfigError("ranking size must be at least 1");
  auto [in, out] = weighted_degrees(network);
  return {top_k(in, k), top_k(out, k)};
}

std::vector<NodeActivity> activity_decomposition(const BranchingMatrix& q,
                                                 std::span<const MarkedEvent> events,
                                                 std::size_t S, const ModelParams* params) {
  if (q.size() != events.size()) throw DataError("branching matrix size differs from event count");
  std::vector<NodeActivity> out(S);
  std::vector<double> offspring(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) out[s].node = s;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::size_t s = events[i].node;
    if (s >= S) throw DataError("event node index out of range");
    ++out[s].events;
    out[s].spontaneous_mass += q.self(i);
    const auto parents = q.parents(i);
    const auto probs = q.probs(i);
    for (std::size_t k = 0; k < parents.size(); ++k) offspring[events[parents[k]].node] += probs[k];
  }
  double spont_total = 0.0, infl_total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    auto& a = out[s];
    a.triggering_influence = a.events ? offspring[s] / static_cast<double>(a.events) : 0.0;
    if (params)
      for (std::size_t r = 0; r < S; ++r) a.theta_influence += params->theta(r, s);
    spont_total += a.spontaneous_mass;
    infl_total += a.triggering_influence;
  }
  for (auto& a : out) {
    a.spontaneous_share = spont_total > 0.0 ? a.spontaneous_mass / spont_total : 0.0;
    a.influence_share = infl_total > 0.0 ? a.triggering_influence / infl_total : 0.0;
  }
  return out;
}

std::string export_graph(const InfluenceNetwork& network, GraphFormat format,
                         std::string_view color_attr) {
  const std::size_t S = network.nodes.size();
  std::ostringstream os;
  switch (format) {
    case GraphFormat::dot: {
      os << "// " << kGrangerCaveat << "\n";
      os << "digraph influence {\n";
      os << "  node [style=filled, fontcolor=white];\n";
      for (std::size_t s = 0; s < S; ++s)
        os << "  n" << s << " [label=\"" << dot_escape(network.nodes[s].id) << "\", fillcolor=\""
           << node_color(network.nodes[s], color_attr) << "\"];\n";
      for (const auto& e : network.edges)
        os << "  n" << e.from << " -> n" << e.to << " [label=\"" << fixed2(e.weight) << "\"];\n";
      os << "}\n";
      break;
    }
    case GraphFormat::json: {
      json j;
      j["caveat"] = kGrangerCaveat;
      j["threshold"] = network.threshold;
      j["nodes"] = json::array();
      for (std::size_t s = 0; s < S; ++s)
        j["nodes"].push_back({{"id", network.nodes[s].id},
                              {"attrs", network.nodes[s].attrs},
                              {"events", network.event_counts[s]}});
      json w = json::array();
      for (std::size_t from = 0; from < S; ++from) {
        json row = json::array();
        for (std::size_t to = 0; to < S; ++to) row.push_back(network.weights(to, from));
        w.push_back(std::move(row));
      }
      j["weight_from_to"] = std::move(w);
      j["edges"] = json::array();
      for (const auto& e : network.edges)
        j["edges"].push_back({{"from", network.nodes[e.from].id},
                              {"to", network.nodes[e.to].id},
                              {"weight", e.weight},
                              {"normalized_weight", network.normalized_weight(e.from, e.to)}});
      os << j.dump(2) << "\n";
      break;
    }
    case GraphFormat::csv: {
      os << "from,to,weight,normalized_weight\n";
      os.precision(17);
      for (const auto& e : network.edges)
        os << network.nodes[e.from].id << ',' << network.nodes[e.to].id << ',' << e.weight << ','
           << network.normalized_weight(e.from, e.to) << '\n';
      break;
    }
  }
  return os.str();
}

InfluenceNetwork network_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("network JSON does not parse: ") + e.what());
  }
  try {
    InfluenceNetwork net;
    net.threshold = j.at("threshold").get<double>();
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& n : j.at("nodes")) {
      NodeInfo info{n.at("id").get<std::string>(), n.value("attrs", AttrMap{})};
      index.emplace(info.id, net.nodes.size());
      net.nodes.push_back(std::move(info));
      net.event_counts.push_back(n.at("events").get<std::size_t>());
    }
    const std::size_t S = net.nodes.size();
    net.weights = SquareMatrix(S, 0.0);
    const auto& w = j.at("weight_from_to");
    if (w.size() != S) throw DataError("network weight matrix is not S x S");
    for (std::size_t from = 0; from < S; ++from) {
      if (w[from].size() != S) throw DataError("network weight matrix is not S x S");
      for (std::size_t to = 0; to < S; ++to) net.weights(to, from) = w[from][to].get<double>();
    }
    for (const auto& e : j.at("edges"))
      net.edges.push_back({index.at(e.at("from").get<std::string>()),
                           index.at(e.at("to").get<std::string>()), e.at("weight").get<double>()});
    return net;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed network JSON: ") + e.what());
  } catch (const std::out_of_range&) {
    throw DataError("network edge references an unknown node");
  }
}

void write_rankings_csv(std::ostream& out, const InfluenceNetwork& network) {
  auto [in, outd] = weighted_degrees(network);
  std::vector<std::size_t> order(network.nodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return outd[a] > outd[b]; });
  out << "rank,node,in_degree,out_degree\n";
  out.precision(17);
  for (std::size_t r = 0; r < order.size(); ++r)
    out << r + 1 << ',' << network.nodes[order[r]].id << ',' << in[order[r]] << ','
        << outd[order[r]] << '\n';
}

void write_activity_csv(std::ostream& out, std::span<const NodeActivity> activity,
                        const NodeRoster& roster) {
  out << "node,events,spontaneous_mass,spontaneous_share,triggering_influence,influence_share,"
         "theta_influence\n";
  out.precision(17);
  for (const auto& a : activity)
    out << (a.node < roster.size() ? roster[a.node].id : std::to_string(a.node)) << ','
        << a.events << ',' << a.spontaneous_mass << ',' << a.spontaneous_share << ','
        << a.triggering_influence << ',' << a.influence_share << ',' << a.theta_influence << '\n';
}

}  // namespace hbtm
