#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>

#include "sapa/error.hpp"
#include "sapa/simgraph.hpp"

namespace sapa {

namespace {

std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_edge_list(std::ostream& out, const SpeakerGraph& graph) {
  for (const auto& e : graph.edges) {
    out << graph.nodes[e.i].str() << ' ' << graph.nodes[e.j].str() << ' '
        << format_weight(e.weight) << '\n';
  }
}

void write_communities_csv(std::ostream& out, const SpeakerGraph& graph,
                           const Partition& partition) {
  if (partition.assignment.size() != graph.size()) {
    throw DomainError("partition does not cover the graph's nodes");
  }
  out << "node_id,community\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    out << graph.nodes[i].str() << ',' << partition.assignment[i] << '\n';
  }
}

void write_dot(std::ostream& out, const SpeakerGraph& graph, const Partition& partition) {
  if (partition.assignment.size() != graph.size()) {
    throw DomainError("partition does not cover the graph's nodes");
  }
  out << "graph speakers {\n";
  if (graph.emotion) out << "  label=" << quoted(std::string(to_string(*graph.emotion))) << ";\n";
  // Shape distinguishes corpora, colour distinguishes communities.
  std::vector<std::string> corpora;
  for (const auto& n : graph.nodes) {
    if (std::find(corpora.begin(), corpora.end(), n.corpus_id) == corpora.end()) {
      corpora.push_back(n.corpus_id);
    }
  }
  static constexpr const char* kShapes[] = {"circle", "square", "triangle", "diamond"};
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto corpus_idx = static_cast<std::size_t>(
        std::find(corpora.begin(), corpora.end(), graph.nodes[i].corpus_id) - corpora.begin());
    out << "  " << quoted(graph.nodes[i].str()) << " [community=" << partition.assignment[i]
        << ", shape=" << kShapes[corpus_idx % 4]
        << ", colorscheme=set312, style=filled, fillcolor=" << (partition.assignment[i] % 12) + 1
        << "];\n";
  }
  for (const auto& e : graph.edges) {
    out << "  " << quoted(graph.nodes[e.i].str()) << " -- " << quoted(graph.nodes[e.j].str())
        << " [weight=" << format_weight(e.weight) << "];\n";
  }
  out << "}\n";
}

CommunityMap read_communities_csv(std::istream& in) {
  CommunityMap out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "node_id,community") throw ParseError("expected header node_id,community", line_no);
      header = true;
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError("expected node_id,community", line_no);
    std::size_t community = 0;
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, community);
    if (ec != std::errc() || ptr != last) throw ParseError("bad community index", line_no);
    NodeId id;
    try {
      id = NodeId::parse(std::string_view(line).substr(0, comma));
    } catch (const SchemaError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!out.emplace(std::move(id), community).second) {
      throw ParseError("duplicate node id", line_no);
    }
  }
  if (!header) throw ParseError("empty community file", line_no + 1);
  return out;
}

}  // namespace sapa
