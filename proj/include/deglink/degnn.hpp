#pragma once

// Degree-aware encoder. Two aggregator stacks (a mean convolution and a
// single-head attention aggregator), each two layers deep, run with shared
// weights over both networks. At every layer a tail node receives one extra
// pseudo-message carrying its predicted missing neighborhood information
// m_i, and a super-head node one carrying -r_i, its predicted redundancy.
//
//   c_i = [h_i, mean_{k in N_i} h_k]
//   gamma_i = c_i W_gamma
//   m_i = gamma_i * m + alpha(c_i)        r_i = gamma_i * r + beta(c_i)

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deglink/graph.hpp"
#include "deglink/layers.hpp"
#include "deglink/numerics.hpp"

namespace deglink {

enum class AggregatorKind { Global, Local };

/// Which correction modules are active.
enum class Ablation { Full, NoAbsentPredictor, NoNoiseRemover };

const char* to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

struct NeighborhoodPredictor {
  nn::Parameter scale_weight;      // W_gamma, 2d x d
  nn::Parameter missing_vector;    // m, 1 x d
  nn::Parameter redundant_vector;  // r, 1 x d
  nn::Mlp missing_shift;           // alpha, 2d -> d
  nn::Mlp redundant_shift;         // beta, 2d -> d

  NeighborhoodPredictor() = default;
  NeighborhoodPredictor(const std::string& name, Index dim, std::mt19937_64& rng);
  Index dim() const { return scale_weight.value.cols(); }
  void collect(std::vector<nn::Parameter*>& out);
};

struct LayerParams {
  AggregatorKind kind = AggregatorKind::Global;
  nn::Linear transform;
  nn::Parameter attn_self;       // d_out x 1, local only
  nn::Parameter attn_neighbor;   // d_out x 1, local only
  NeighborhoodPredictor predictor;  // operates on this layer's input dim

  LayerParams() = default;
  LayerParams(const std::string& name, AggregatorKind kind, Index in_dim, Index out_dim,
              std::mt19937_64& rng);
  Index in_dim() const { return transform.in_dim(); }
  Index out_dim() const { return transform.out_dim(); }
  void collect(std::vector<nn::Parameter*>& out);
};

struct EncoderDims {
  Index feature_dim = 256;
  Index hidden_dim = 64;
  Index embedding_dim = 256;  // split evenly between the two stacks
};

struct EncoderParams {
  EncoderDims dims;
  std::vector<LayerParams> global_layers;
  std::vector<LayerParams> local_layers;

  static EncoderParams init(const EncoderDims& dims, std::uint64_t seed);
  void collect(std::vector<nn::Parameter*>& out);
};

/// Per-graph message-passing structure for one forward pass: mean pooling
/// over effective neighborhoods plus the aggregation set of every node
/// (self, neighbors, and pseudo-message row N + i when corrected).
struct CorrectionPlan {
  std::size_t num_nodes = 0;
  /// Tail for real or forged tail nodes.
  std::vector<DegreeClass> classes;
  std::vector<double> missing_indicator;    // 1 where +m_i enters
  std::vector<double> redundant_indicator;  // 1 where -r_i enters
  bool predict_missing = true;
  bool predict_redundant = true;
  nn::EdgeIndexPtr mean_index;
  Matrix mean_weights;  // E x 1
  nn::EdgeIndexPtr aggregation_index;
  Matrix conv_weights;  // E x 1, 1 / |aggregation set|
};

/// Real tails and forged heads are Tail; everything else keeps its class.
std::vector<DegreeClass> correction_classes(const DegreePartition& part, const GraphView& view);
CorrectionPlan plan_corrections(const GraphView& view, const DegreePartition& part,
                                Ablation ablation);

/// Mean of the rows of H over i's effective neighborhood; zeros if empty.
Matrix neighborhood_mean(const Matrix& H, const GraphView& view, NodeId i);

/// c = [H, mean-pooled neighbors of H] for every node, N x 2d.
nn::Var local_context(nn::Var H, const CorrectionPlan& plan);
nn::Var predict_missing(nn::Tape& tape, nn::Var context, NeighborhoodPredictor& p);
nn::Var predict_redundant(nn::Tape& tape, nn::Var context, NeighborhoodPredictor& p);

struct LayerResult {
  nn::Var output;
  std::optional<nn::Var> missing;    // m_i for every node, when predicted
  std::optional<nn::Var> redundant;  // r_i for every node, when predicted
};

/// One corrected aggregation layer: tanh on hidden layers, identity on the last.
LayerResult corrected_aggregate(nn::Tape& tape, nn::Var H, const CorrectionPlan& plan,
                                LayerParams& layer, bool final_layer);

struct PredictionCache {
  AggregatorKind kind = AggregatorKind::Global;
  std::size_t layer = 0;
  std::optional<nn::Var> missing;
  std::optional<nn::Var> redundant;
};

struct EncoderOutput {
  nn::Var embedding;  // N x embedding_dim, [global | local]
  std::vector<nn::Var> global_activations;
  std::vector<nn::Var> local_activations;
  std::vector<PredictionCache> caches;
  std::vector<DegreeClass> classes;
};

EncoderOutput encode(nn::Tape& tape, const Matrix& features, const CorrectionPlan& plan,
                     EncoderParams& params);

/// Both graphs through the same parameters on one tape.
std::pair<EncoderOutput, EncoderOutput> forward_pair(nn::Tape& tape, const GraphView& source_view,
                                                     const GraphView& target_view,
                                                     const DegreePartition& source_part,
                                                     const DegreePartition& target_part,
                                                     const Matrix& source_features,
                                                     const Matrix& target_features,
                                                     EncoderParams& params, Ablation ablation);

}  // namespace deglink
