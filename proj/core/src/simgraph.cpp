#include "sapa/simgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <utility>

#include "sapa/error.hpp"

namespace sapa {

namespace {

// Weighted graph with self-loops, used internally by Louvain. self[i] holds the
// ordered-pair sum over i's members, i.e. twice the internal edge weight.
struct WorkGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> self;
  std::vector<double> degree;

  std::size_t size() const { return adj.size(); }
};

WorkGraph to_work_graph(const SpeakerGraph& g, bool unweighted) {
  WorkGraph w;
  w.adj.resize(g.size());
  w.self.assign(g.size(), 0.0);
  w.degree.assign(g.size(), 0.0);
  for (const auto& e : g.edges) {
    const double wt = unweighted ? 1.0 : e.weight;
    w.adj[e.i].emplace_back(e.j, wt);
    w.adj[e.j].emplace_back(e.i, wt);
    w.degree[e.i] += wt;
    w.degree[e.j] += wt;
  }
  for (auto& nbrs : w.adj) std::sort(nbrs.begin(), nbrs.end());
  return w;
}

// Local moving phase. Returns true when at least one node changed community.
bool move_nodes(const WorkGraph& g, double m2, std::vector<std::size_t>& community,
                std::mt19937_64& rng) {
  const std::size_t n = g.size();
  constexpr double kEps = 1e-13;
  std::vector<double> tot(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) tot[community[i]] += g.degree[i];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> w_to(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_move = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t i : order) {
      const std::size_t old_c = community[i];
      const double k_i = g.degree[i];

      touched.clear();
      for (const auto& [j, wt] : g.adj[i]) {
        const std::size_t c = community[j];
        if (w_to[c] == 0.0) touched.push_back(c);
        w_to[c] += wt;
      }
      tot[old_c] -= k_i;

      auto gain = [&](std::size_t c) { return w_to[c] - tot[c] * k_i / m2; };
      const double stay = gain(old_c);
      double best = stay;
      for (std::size_t c : touched) best = std::max(best, gain(c));

      std::size_t target = old_c;
      if (best > stay + kEps) {
        target = n;
        for (std::size_t c : touched) {
          if (c != old_c && gain(c) >= best - kEps) target = std::min(target, c);
        }
      }
      tot[target] += k_i;
      if (target != old_c) {
        community[i] = target;
        moved = true;
        any_move = true;
      }
      for (std::size_t c : touched) w_to[c] = 0.0;
    }
  }
  return any_move;
}

// Renumbers communities in order of first appearance; returns the count.
std::size_t renumber(std::vector<std::size_t>& community) {
  std::vector<std::size_t> map(community.size(), community.size());
  std::size_t next = 0;
  for (auto& c : community) {
    if (map[c] == community.size()) map[c] = next++;
    c = map[c];
  }
  return next;
}

WorkGraph aggregate(const WorkGraph& g, const std::vector<std::size_t>& community,
                    std::size_t n_comm) {
  WorkGraph out;
  out.adj.resize(n_comm);
  out.self.assign(n_comm, 0.0);
  out.degree.assign(n_comm, 0.0);
  std::vector<std::map<std::size_t, double>> links(n_comm);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::size_t ci = community[i];
    out.self[ci] += g.self[i];
    out.degree[ci] += g.degree[i];
    for (const auto& [j, wt] : g.adj[i]) {
      const std::size_t cj = community[j];
      if (ci == cj) {
        out.self[ci] += wt;  // each internal edge is seen from both ends
      } else {
        links[ci][cj] += wt;
      }
    }
  }
  for (std::size_t c = 0; c < n_comm; ++c) {
    out.adj[c].assign(links[c].begin(), links[c].end());
  }
  return out;
}

}  // namespace

std::string NodeId::str() const { return corpus_id + ":" + speaker_id; }

NodeId NodeId::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw SchemaError("node id '" + std::string(text) + "' lacks a corpus prefix");
  }
  return NodeId{std::string(text.substr(0, colon)), std::string(text.substr(colon + 1))};
}

double SpeakerGraph::total_weight() const noexcept {
  double m = 0.0;
  for (const auto& e : edges) m += e.weight;
  return m;
}

SpeakerGraph SpeakerGraph::from_edges(std::size_t n, std::vector<Edge> edges) {
  SpeakerGraph g;
  g.emotion = std::nullopt;
  g.tau = 0.0;
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(NodeId{"n", std::to_string(i)});
  g.style.assign(n, {});
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto& e : edges) {
    if (e.i == e.j) throw DomainError("self-loop on node " + std::to_string(e.i));
    if (e.i >= n || e.j >= n) throw DomainError("edge endpoint out of range");
    if (e.i > e.j) std::swap(e.i, e.j);
    if (!seen.emplace(e.i, e.j).second) throw DomainError("duplicate edge");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DomainError("edge weights must be positive and finite");
    }
  }
  g.edges = std::move(edges);
  return g;
}

Partition Partition::singletons(std::size_t n) {
  Partition p;
  p.assignment.resize(n);
  std::iota(p.assignment.begin(), p.assignment.end(), 0);
  p.n_communities = n;
  return p;
}

Partition Partition::from_labels(std::span<const std::size_t> labels) {
  Partition p;
  std::map<std::size_t, std::size_t> map;
  for (std::size_t l : labels) {
    auto [it, inserted] = map.try_emplace(l, map.size());
    p.assignment.push_back(it->second);
  }
  p.n_communities = map.size();
  return p;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DomainError("cosine: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine: zero-norm vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

SpeakerGraph build_graph_from_styles(std::vector<NodeId> nodes,
                                     std::vector<std::vector<double>> styles, double tau,
                                     std::optional<Emotion> emotion) {
  if (nodes.size() != styles.size()) throw DomainError("node/style count mismatch");
  SpeakerGraph g;
  g.emotion = emotion;
  g.tau = tau;
  g.nodes = std::move(nodes);
  g.style = std::move(styles);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      const double w = cosine(g.style[i], g.style[j]);
      if (w > tau) g.edges.push_back(Edge{i, j, w});
    }
  }
  return g;
}

namespace {

SpeakerGraph build_from_means(std::span<const EmbeddingRecord> records,
                              std::optional<Emotion> emotion, const GraphOptions& options) {
  std::map<NodeId, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& r : records) {
    if (r.kind != EmbeddingKind::speaker || r.split != Split::train) continue;
    if (emotion && r.emotion != *emotion) continue;
    if (options.corpus_id && r.corpus_id != *options.corpus_id) continue;
    auto& [sum, count] = sums[NodeId{r.corpus_id, r.speaker_id}];
    if (sum.empty()) sum.assign(r.vector.size(), 0.0);
    if (sum.size() != r.vector.size()) throw SchemaError("speaker vectors differ in dimension");
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += r.vector[d];
    ++count;
  }
  if (sums.size() < 2) {
    throw InsufficientDataError(
        std::string("fewer than two speakers with train-split speaker records for ") +
        (emotion ? std::string(to_string(*emotion)) : std::string("the global graph")));
  }
  std::vector<NodeId> nodes;
  std::vector<std::vector<double>> styles;
  for (auto& [id, acc] : sums) {
    auto& [sum, count] = acc;
    for (auto& x : sum) x /= static_cast<double>(count);
    nodes.push_back(id);
    styles.push_back(std::move(sum));
  }
  return build_graph_from_styles(std::move(nodes), std::move(styles), options.tau, emotion);
}

}  // namespace

SpeakerGraph build_graph(std::span<const EmbeddingRecord> records, Emotion emotion,
                         const GraphOptions& options) {
  return build_from_means(records, emotion, options);
}

SpeakerGraph build_global_graph(std::span<const EmbeddingRecord> records,
                                const GraphOptions& options) {
  return build_from_means(records, std::nullopt, options);
}

double modularity(const SpeakerGraph& graph, const Partition& partition, bool unweighted) {
  if (partition.assignment.size() != graph.size()) {
    throw DomainError("partition does not cover the graph's nodes");
  }
  if (graph.edges.empty()) throw DomainError("modularity undefined on an edgeless graph");
  std::vector<double> internal(partition.n_communities, 0.0);
  std::vector<double> tot(partition.n_communities, 0.0);
  double m = 0.0;
  for (const auto& e : graph.edges) {
    const double w = unweighted ? 1.0 : e.weight;
    const std::size_t ci = partition.assignment[e.i];
    const std::size_t cj = partition.assignment[e.j];
    if (ci >= partition.n_communities || cj >= partition.n_communities) {
      throw DomainError("community index out of range");
    }
    m += w;
    tot[ci] += w;
    tot[cj] += w;
    if (ci == cj) internal[ci] += 2.0 * w;
  }
  const double m2 = 2.0 * m;
  double q = 0.0;
  for (std::size_t c = 0; c < partition.n_communities; ++c) {
    q += internal[c] / m2 - (tot[c] / m2) * (tot[c] / m2);
  }
  return q;
}

namespace {

// Aggregation levels starting from an existing membership of the original
// graph's nodes. Updates membership in place.
void climb(WorkGraph g, double m2, std::vector<std::size_t>& membership, std::mt19937_64& rng,
           bool first_level_done) {
  if (first_level_done) {
    std::vector<std::size_t> community = membership;
    const std::size_t n_comm = renumber(community);
    membership = community;
    if (n_comm == g.size()) return;
    g = aggregate(g, community, n_comm);
  }
  while (true) {
    std::vector<std::size_t> community(g.size());
    std::iota(community.begin(), community.end(), 0);
    if (!move_nodes(g, m2, community, rng)) break;
    const std::size_t n_comm = renumber(community);
    for (auto& c : membership) c = community[c];
    if (n_comm == g.size()) break;
    g = aggregate(g, community, n_comm);
  }
}

}  // namespace

Partition louvain(const SpeakerGraph& graph, std::uint64_t seed, bool unweighted) {
  if (graph.edges.empty()) throw DomainError("louvain: graph has no edges");
  constexpr std::size_t kRestarts = 10;
  constexpr double kEps = 1e-13;
  std::mt19937_64 rng(seed);
  const WorkGraph g = to_work_graph(graph, unweighted);
  double m2 = 0.0;
  for (double k : g.degree) m2 += k;
  auto q_of = [&](const std::vector<std::size_t>& m) {
    return modularity(graph, Partition::from_labels(m), unweighted);
  };
  // Local moves on the original graph, then aggregation levels, until stable.
  auto polish = [&](std::vector<std::size_t>& m) {
    while (move_nodes(g, m2, m, rng)) climb(g, m2, m, rng, true);
  };

  std::vector<std::size_t> membership;
  double best_q = -1.0;
  for (std::size_t r = 0; r < kRestarts; ++r) {
    std::vector<std::size_t> m(graph.size());
    std::iota(m.begin(), m.end(), 0);
    climb(g, m2, m, rng, false);
    polish(m);
    const double q = q_of(m);
    if (q > best_q + kEps) {
      best_q = q;
      membership = std::move(m);
    }
  }

  // Kicks: move one node into a neighbouring community or a new singleton,
  // re-optimise, and keep the result only when Q improves. At most 4n trials.
  std::size_t budget = 4 * g.size();
  bool improved = true;
  while (improved) {
    improved = false;
    const std::size_t n_comm = renumber(membership);
    for (std::size_t i = 0; i < g.size() && !improved && budget > 0; ++i) {
      std::set<std::size_t> targets{n_comm};
      for (const auto& [j, wt] : g.adj[i]) targets.insert(membership[j]);
      targets.erase(membership[i]);
      for (std::size_t c : targets) {
        if (budget == 0) break;
        --budget;
        std::vector<std::size_t> trial = membership;
        trial[i] = c;
        polish(trial);
        climb(g, m2, trial, rng, true);
        const double q = q_of(trial);
        if (q > best_q + kEps) {
          best_q = q;
          membership = std::move(trial);
          improved = true;
          break;
        }
      }
    }
  }
  return Partition::from_labels(membership);
}

EmotionClustering cluster_graph(SpeakerGraph graph, std::uint64_t seed, bool unweighted) {
  EmotionClustering out;
  if (graph.edges.empty()) {
    out.partition = Partition::singletons(graph.size());
    out.report = ModularityReport{graph.emotion, out.partition.n_communities, 0.0};
  } else {
    out.partition = louvain(graph, seed, unweighted);
    out.report = ModularityReport{graph.emotion, out.partition.n_communities,
                                  modularity(graph, out.partition, unweighted)};
  }
  out.graph = std::move(graph);
  return out;
}

ClusteringResult cluster_all_emotions(std::span<const EmbeddingRecord> records,
                                      std::uint64_t seed, const GraphOptions& options) {
  ClusteringResult result;
  for (Emotion e : kAllEmotions) {
    SpeakerGraph g;
    try {
      g = build_graph(records, e, options);
    } catch (const InsufficientDataError& err) {
      result.notices.push_back(std::string(to_string(e)) + ": " + err.what());
      continue;
    }
    if (g.edges.empty()) {
      result.notices.push_back(std::string(to_string(e)) +
                               ": no edge above tau; every node is its own community");
    }
    result.per_emotion.emplace(e, cluster_graph(std::move(g), seed + index_of(e),
                                                options.unweighted));
  }
  return result;
}

CommunityMap to_community_map(const SpeakerGraph& graph, const Partition& partition) {
  if (partition.assignment.size() != graph.size()) {
    throw DomainError("partition does not cover the graph's nodes");
  }
  CommunityMap out;
  for (std::size_t i = 0; i < graph.size(); ++i) out[graph.nodes[i]] = partition.assignment[i];
  return out;
}

}  // namespace sapa
