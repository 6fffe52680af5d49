#pragma once

// Cross-network mapping, the training objectives, candidate ranking and
// ranking metrics.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deglink/degnn.hpp"
#include "deglink/graph.hpp"
#include "deglink/layers.hpp"

namespace deglink {

/// f1 maps source-network embeddings, f2 target-network embeddings, into a
/// common space. Each is in -> 2*in -> out with a tanh hidden layer.
struct MappingNets {
  nn::Mlp source;
  nn::Mlp target;

  static MappingNets init(Index in_dim, Index out_dim, std::uint64_t seed);
  void collect(std::vector<nn::Parameter*>& out);
};

enum class AnchorRole { Train, Test };

struct AnchorSet {
  std::vector<AnchorLink> pairs;
  AnchorRole role = AnchorRole::Train;

  std::size_t size() const { return pairs.size(); }
  /// Throws on duplicate source ids or ids outside [0, n_source) / [0, n_target).
  void validate(std::size_t n_source, std::size_t n_target) const;
};

// ---------------------------------------------------------------------------
// Losses

/// sum over sampled pairs of (a_ij - cos(z_i, z_j))^2.
nn::Var topology_loss(nn::Var embeddings, std::span<const SampledPair> samples);

/// p negatives per anchor, drawn uniformly from target nodes other than the
/// anchor's own target. Row-major: negatives[a * p + k].
std::vector<NodeId> sample_anchor_negatives(std::span<const AnchorLink> anchors,
                                            std::size_t target_nodes, std::size_t p,
                                            std::uint64_t seed);

/// sum_a (1 - t_ia)^2 + sum_{a,k} (t_ib^2 + t_ab^2) over mapped rows already
/// gathered per anchor: source (A x d), matched (A x d), negatives (A*p x d).
nn::Var matching_loss_rows(nn::Var source, nn::Var matched, nn::Var negatives, std::size_t p);

/// Gathers anchor rows from the mapped embedding matrices and applies
/// matching_loss_rows with freshly sampled negatives.
nn::Var matching_loss(nn::Var mapped_source, nn::Var mapped_target,
                      std::span<const AnchorLink> anchors, std::size_t p, std::uint64_t seed);

/// sum over layers and stacks of ||m_i||^2 for non-tail i plus ||r_i||^2 for
/// non-super-head i. Classes come from the forward pass (forged heads count
/// as tails).
nn::Var constraint_loss(nn::Tape& tape, const EncoderOutput& encoded);

/// L_t + lambda (L_s1 + L_s2) + mu (L_p1 + L_p2)
nn::Var total_loss(nn::Var matching, nn::Var topology_source, nn::Var topology_target,
                   nn::Var constraint_source, nn::Var constraint_target, double lambda, double mu);
double total_loss(double matching, double topology_source, double topology_target,
                  double constraint_source, double constraint_target, double lambda, double mu);

// ---------------------------------------------------------------------------
// Ranking and metrics

/// Cosine similarity of `query` against every row of `candidates`.
std::vector<double> similarity_scores(std::span<const double> query, const Matrix& candidates);

/// Candidate ids (rows of `targets` not excluded) by cosine similarity
/// descending, ties by ascending id.
std::vector<NodeId> rank_candidates(std::span<const double> query, const Matrix& targets,
                                    const std::vector<bool>& excluded);

/// 1-based position `truth` would take in rank_candidates, computed by counting.
std::size_t rank_of(std::span<const double> query, const Matrix& targets,
                    const std::vector<bool>& excluded, NodeId truth);

/// mean over ranks of max(0, k - (rank - 1)) / k
double hits_at_k(std::span<const std::size_t> ranks, std::size_t k);
double mean_reciprocal_rank(std::span<const std::size_t> ranks);

struct DegreeBucket {
  std::size_t lower = 0;  // exclusive
  std::size_t upper = std::numeric_limits<std::size_t>::max();  // inclusive
  std::string label() const;
};

std::vector<DegreeBucket> default_degree_buckets();

struct BucketMetric {
  DegreeBucket bucket;
  double mrr = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<std::pair<std::size_t, double>> hits;  // (k, Hits@k)
  double mrr = 0.0;
  std::vector<BucketMetric> per_bucket_mrr;
  std::size_t num_test = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;

  double hits_at(std::size_t k) const;
  nlohmann::json to_json() const;
};

/// Hits@{1,10,30}, MRR and per-bucket MRR for one rank per test anchor.
/// `source_degrees[a]` is the degree of anchor a's source node. Buckets must
/// be contiguous, start at 0 and end unbounded; degree 0 counts toward the
/// first bucket.
MetricsReport summarize_ranks(std::span<const std::size_t> ranks,
                              std::span<const std::size_t> source_degrees,
                              const std::vector<DegreeBucket>& buckets);

}  // namespace deglink
