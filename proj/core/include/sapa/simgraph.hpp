#pragma once

// Per-emotion speaker-similarity graphs, Louvain community detection and
// weighted modularity.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sapa/embstore.hpp"
#include "sapa/emotion.hpp"

namespace sapa {

// Numerical slack allowed above a cosine of 1.
inline constexpr double kWeightSlack = 1e-9;
inline constexpr double kDefaultTau = 0.7;

struct NodeId {
  std::string corpus_id;
  std::string speaker_id;

  auto operator<=>(const NodeId&) const = default;
  bool operator==(const NodeId&) const = default;

  // "corpus:speaker"
  std::string str() const;
  static NodeId parse(std::string_view text);
};

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 0.0;

  bool operator==(const Edge&) const = default;
};

struct SpeakerGraph {
  std::optional<Emotion> emotion;  // nullopt for the emotion-agnostic graph
  std::vector<NodeId> nodes;       // sorted by (corpus_id, speaker_id)
  std::vector<std::vector<double>> style;
  std::vector<Edge> edges;         // i < j, each pair once
  double tau = kDefaultTau;

  std::size_t size() const noexcept { return nodes.size(); }
  double total_weight() const noexcept;

  // Graph over anonymous nodes "n:0", "n:1", ... with the given edges.
  // Throws DomainError on self-loops, duplicate pairs or out-of-range ends.
  static SpeakerGraph from_edges(std::size_t n, std::vector<Edge> edges);
};

struct Partition {
  std::vector<std::size_t> assignment;  // node index -> community
  std::size_t n_communities = 0;

  static Partition singletons(std::size_t n);
  // Relabels to contiguous indices in order of first appearance.
  static Partition from_labels(std::span<const std::size_t> labels);

  bool operator==(const Partition&) const = default;
};

struct ModularityReport {
  std::optional<Emotion> emotion;
  std::size_t n_communities = 0;
  double q = 0.0;
};

struct GraphOptions {
  double tau = kDefaultTau;
  // Restrict nodes to one corpus; joint over all corpora when unset.
  std::optional<std::string> corpus_id;
  // Feed unit edge weights to modularity and Louvain instead of cosines.
  bool unweighted = false;
};

// Throws DomainError on a dimension mismatch or a zero-norm argument.
double cosine(std::span<const double> u, std::span<const double> v);

// One node per (corpus, speaker) with at least one train-split speaker-kind
// record of `emotion`; style = mean of those vectors. Throws
// InsufficientDataError with fewer than two nodes.
SpeakerGraph build_graph(std::span<const EmbeddingRecord> records, Emotion emotion,
                         const GraphOptions& options = {});

// Emotion-agnostic variant: style = mean over all emotions' train records.
SpeakerGraph build_global_graph(std::span<const EmbeddingRecord> records,
                                const GraphOptions& options = {});

// Graph over explicit style vectors; used by both builders.
SpeakerGraph build_graph_from_styles(std::vector<NodeId> nodes,
                                     std::vector<std::vector<double>> styles, double tau,
                                     std::optional<Emotion> emotion);

// Weighted modularity over ordered node pairs. Throws DomainError when the
// graph has no edge or the partition does not cover the nodes.
double modularity(const SpeakerGraph& graph, const Partition& partition, bool unweighted = false);

// Two-phase Louvain. Node visit order is shuffled with `seed`; equal gains go
// to the lowest community index. Throws DomainError on an edgeless graph.
Partition louvain(const SpeakerGraph& graph, std::uint64_t seed, bool unweighted = false);

struct EmotionClustering {
  SpeakerGraph graph;
  Partition partition;
  ModularityReport report;
};

struct ClusteringResult {
  std::map<Emotion, EmotionClustering> per_emotion;
  std::vector<std::string> notices;  // one per emotion that could not be clustered
};

ClusteringResult cluster_all_emotions(std::span<const EmbeddingRecord> records,
                                      std::uint64_t seed, const GraphOptions& options = {});

// Clusters one already-built graph; an edgeless graph yields singletons and Q = 0.
EmotionClustering cluster_graph(SpeakerGraph graph, std::uint64_t seed, bool unweighted = false);

// Node -> community, the form consumed by triplet mining and group analysis.
using CommunityMap = std::map<NodeId, std::size_t>;
using PartitionMap = std::map<Emotion, CommunityMap>;

CommunityMap to_community_map(const SpeakerGraph& graph, const Partition& partition);

// Export formats.
void write_edge_list(std::ostream& out, const SpeakerGraph& graph);
void write_communities_csv(std::ostream& out, const SpeakerGraph& graph,
                           const Partition& partition);
void write_dot(std::ostream& out, const SpeakerGraph& graph, const Partition& partition);
// Lines starting with '#' are comments. Throws ParseError on malformed rows.
CommunityMap read_communities_csv(std::istream& in);

}  // namespace sapa
