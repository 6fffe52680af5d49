#pragma once

// Run configuration, anchor splitting, the training loop, evaluation,
// ablation runs and synthetic graph-pair generation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deglink/degnn.hpp"
#include "deglink/features.hpp"
#include "deglink/graph.hpp"
#include "deglink/uil.hpp"

namespace deglink {

enum class SplitMode { TailBased, Ratio };

struct RunConfig {
  std::string source_edges;
  std::string target_edges;
  std::string anchors;
  std::string source_features;  // optional precomputed features
  std::string target_features;

  std::size_t tail_threshold = 5;
  double super_fraction = 0.10;
  std::optional<std::size_t> source_super_threshold;
  std::optional<std::size_t> target_super_threshold;

  double lambda = 0.2;
  double mu = 0.001;
  EncoderDims dims;
  Index mapping_dim = 256;
  std::size_t anchor_negatives = 5;
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;

  SplitMode split = SplitMode::TailBased;
  double train_ratio = 0.5;
  Ablation ablation = Ablation::Full;

  /// dim and seed are overridden by feature_dim and the run seed.
  Node2VecOptions node2vec;

  /// Keep the parameters of the epoch with the best train-split MRR.
  bool select_best = true;
  std::size_t selection_interval = 1;

  std::vector<DegreeBucket> buckets = default_degree_buckets();

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are an error. Relative paths are resolved against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static RunConfig load(const std::string& path);
};

// ---------------------------------------------------------------------------

struct AnchorSplit {
  AnchorSet train;
  AnchorSet test;
};

/// Tail-based: an anchor is a test anchor iff either endpoint is a tail node.
/// Ratio: seeded shuffle, the first ceil(ratio * n) anchors train.
AnchorSplit split_anchors(const std::vector<AnchorLink>& anchors,
                          const DegreePartition& source_part, const DegreePartition& target_part,
                          SplitMode mode, double train_ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct TrainingTrace {
  std::vector<double> loss;
  std::vector<double> train_mrr;       // one entry per selection check
  std::vector<std::size_t> checked_epochs;
  std::size_t best_epoch = 0;          // 0 means the initial parameters
  std::vector<double> epoch_seconds;   // optimization step only
};

struct TrainedModel {
  EncoderParams encoder;
  MappingNets mapping;
  RunConfig config;
  Matrix source_features;
  Matrix target_features;
  TrainingTrace trace;

  static TrainedModel initialize(const RunConfig& config, Matrix source_features,
                                 Matrix target_features);
  std::vector<nn::Parameter*> parameters();

  void save(const std::string& path) const;
  static TrainedModel load(const std::string& path);
};

/// Graphs, partitions and features for one run.
struct RunInputs {
  Graph source;
  Graph target;
  std::vector<AnchorLink> anchors;
  DegreePartition source_part;
  DegreePartition target_part;
  Matrix source_features;
  Matrix target_features;
};

DegreePartition partition_for(const Graph& g, const RunConfig& config,
                              const std::optional<std::size_t>& explicit_m);

/// Partitions the graphs and computes node2vec features (per-graph seeds
/// derived from config.seed) unless features are supplied.
RunInputs prepare_inputs(const RunConfig& config, Graph source, Graph target,
                         std::vector<AnchorLink> anchors,
                         std::optional<Matrix> source_features = std::nullopt,
                         std::optional<Matrix> target_features = std::nullopt);
/// Reads every path in the config.
RunInputs load_inputs(const RunConfig& config);

/// split_anchors with the config's mode and a split seed derived from config.seed.
AnchorSplit split_for(const RunConfig& config, const RunInputs& inputs);

/// Drives optimization one epoch at a time.
class Trainer {
 public:
  Trainer(const RunConfig& config, const RunInputs& inputs, const AnchorSet& train_anchors);

  /// One optimization step over fresh forged views; returns the total loss.
  double run_epoch(std::size_t epoch);
  /// MRR of the current parameters on the training anchors, un-forged views.
  double train_mrr();
  /// Runs config.epochs epochs with model selection.
  TrainedModel run();

  TrainedModel& model() { return model_; }

 private:
  const RunConfig& config_;
  const RunInputs& inputs_;
  const AnchorSet& train_;
  TrainedModel model_;
  std::vector<nn::Parameter*> params_;
  nn::Adam optimizer_;
};

TrainedModel train(const RunConfig& config, const RunInputs& inputs,
                   const AnchorSet& train_anchors);

/// Mapped embeddings (f1(Z1), f2(Z2)) over un-forged views.
struct MappedEmbeddings {
  Matrix source;
  Matrix target;
};

MappedEmbeddings embed(TrainedModel& model, const RunInputs& inputs);

/// Ranks every test anchor against all target nodes except training-anchor
/// targets.
MetricsReport evaluate(TrainedModel& model, const RunInputs& inputs, const AnchorSet& train,
                       const AnchorSet& test);
MetricsReport evaluate_embeddings(const MappedEmbeddings& mapped, const Graph& source,
                                  const AnchorSet& train, const AnchorSet& test,
                                  const std::vector<DegreeBucket>& buckets);

struct RunResult {
  TrainedModel model;
  AnchorSplit split;
  MetricsReport report;
};

/// Split, train and evaluate on prepared inputs.
RunResult run_experiment(const RunConfig& config, const RunInputs& inputs);

struct AblationResult {
  std::vector<std::pair<Ablation, MetricsReport>> reports;
  std::string table() const;
  nlohmann::json to_json() const;
};

/// full, no_AP and no_NR on the same inputs and split.
AblationResult ablate(const RunConfig& config, const RunInputs& inputs);

// ---------------------------------------------------------------------------

struct SyntheticOptions {
  std::size_t n = 1000;
  double exponent = 2.5;
  /// Noise edges added on top of graph 2, as a fraction of |E1|.
  double noise = 0.1;
  /// Fraction of nodes that become anchors.
  double anchor_overlap = 1.0;
  /// Independent edge dropout applied to graph 2.
  double dropout = 0.2;
  std::size_t min_degree = 3;
  /// 0 selects the natural cutoff n^(1/(exponent-1)).
  std::size_t max_degree = 0;
  std::uint64_t seed = 0;
};

struct SyntheticPair {
  Graph source;
  Graph target;
  std::vector<AnchorLink> anchors;
};

/// Graph 1 from a power-law degree sequence (configuration model, self-loops
/// and multi-edges removed); graph 2 is a relabeled copy with edge dropout
/// and noise edges attached preferentially to the top-degree decile.
SyntheticPair generate_synthetic_pair(const SyntheticOptions& opts);

}  // namespace deglink
