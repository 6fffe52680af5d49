#pragma once

// Undirected social graphs, degree partitions, forged-tail training views
// and balanced edge sampling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deglink {

using NodeId = std::uint32_t;

struct Edge {
  NodeId source = 0;
  NodeId target = 0;
  double weight = 1.0;
};

struct EdgeListStats {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_collapsed = 0;
};

/// Immutable undirected graph in compressed sparse row form. Neighbor lists
/// are sorted, free of self-loops and duplicates, and symmetric.
class Graph {
 public:
  Graph() = default;

  /// Symmetrizes `edges`, drops self-loops and collapses duplicates (the
  /// first occurrence's weight is kept). Throws on ids >= num_nodes or
  /// negative / non-finite weights.
  static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges,
                          EdgeListStats* stats = nullptr);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  /// Number of undirected edges.
  std::size_t num_edges() const { return targets_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> neighbor_weights(NodeId i) const {
    return {weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }
  std::vector<std::size_t> degrees() const;

  bool has_edge(NodeId i, NodeId j) const;
  /// a_ij; zero when the nodes are not adjacent.
  double weight(NodeId i, NodeId j) const;

  /// Every undirected edge once, with source < target, in (source, target) order.
  std::vector<Edge> edges() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
  std::vector<double> weights_;
};

/// Parses `<src> <dst> [weight]` lines; `#` lines and blank lines are skipped.
/// N is the largest id plus one.
Graph load_edge_list(std::string_view text, EdgeListStats* stats = nullptr);
Graph load_edge_list_file(const std::string& path, EdgeListStats* stats = nullptr);
/// Inverse of load_edge_list. Weights are written only when some edge is not 1.
std::string write_edge_list(const Graph& g);

struct AnchorLink {
  NodeId source = 0;
  NodeId target = 0;
  friend bool operator==(const AnchorLink&, const AnchorLink&) = default;
};

/// Anchor files share the edge-list syntax: column 1 is the source-graph id,
/// column 2 the target-graph id. Pairs are kept in file order, unsymmetrized.
std::vector<AnchorLink> load_anchor_list(std::string_view text);
std::vector<AnchorLink> load_anchor_list_file(const std::string& path);
std::string write_anchor_list(std::span<const AnchorLink> anchors);

std::string read_text_file(const std::string& path);

// ---------------------------------------------------------------------------
// Degree partition

enum class DegreeClass : std::uint8_t { Tail, Head, SuperHead };

const char* to_string(DegreeClass c);

struct DegreePartition {
  std::size_t tail_threshold = 0;   // D
  std::size_t super_threshold = 0;  // M
  std::vector<DegreeClass> class_of;

  std::size_t count(DegreeClass c) const;
  bool is(NodeId i, DegreeClass c) const { return class_of[i] == c; }
};

/// M such that the ceil(fraction * N) highest-degree nodes exceed it: nodes
/// are ordered by (degree desc, id asc) and M is the degree of the next node.
std::size_t super_threshold_for(std::span<const std::size_t> degrees, double super_fraction);

DegreePartition partition_degrees(std::span<const std::size_t> degrees, std::size_t tail_threshold,
                                  std::size_t super_threshold);
/// Throws std::invalid_argument when the derived M is not above D; pass an
/// explicit M to partition_with_threshold in that case.
DegreePartition partition_by_degree(const Graph& g, std::size_t tail_threshold,
                                    double super_fraction);
DegreePartition partition_with_threshold(const Graph& g, std::size_t tail_threshold,
                                         std::size_t super_threshold);

// ---------------------------------------------------------------------------
// Views

/// Per-node effective neighborhoods over a base graph. Forged nodes are head
/// nodes whose neighborhoods were down-sampled to at most D neighbors.
class GraphView {
 public:
  /// The identity view: every node keeps its full neighborhood.
  static GraphView unforged(const Graph& base);

  const Graph& base() const { return *base_; }
  std::size_t num_nodes() const { return forged_.size(); }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {targets_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }
  bool is_forged(NodeId i) const { return forged_[i] != 0; }
  std::size_t num_forged() const;

 private:
  friend GraphView forge_tail_view(const Graph&, const DegreePartition&, std::uint64_t);

  const Graph* base_ = nullptr;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
  std::vector<std::uint8_t> forged_;
};

/// Every head node keeps a uniform random subset of k neighbors with k drawn
/// uniformly from {1, ..., D}; tail and super-head nodes are untouched.
GraphView forge_tail_view(const Graph& g, const DegreePartition& part, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Balanced edge sampling

struct SampledPair {
  NodeId i = 0;
  NodeId j = 0;
  double target = 0.0;  // a_ij
  bool positive = false;
};

/// All |E| edges as positives followed by |E| uniformly drawn non-adjacent
/// pairs (with replacement). A complete graph yields no negatives.
std::vector<SampledPair> sample_balanced_edges(const Graph& g, std::uint64_t seed);

}  // namespace deglink
