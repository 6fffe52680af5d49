#pragma once

// Initial node features: skip-gram embeddings trained on second-order biased
// random walks, or a precomputed plain-text matrix.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deglink/graph.hpp"
#include "deglink/numerics.hpp"

namespace deglink {

struct Node2VecOptions {
  Index dim = 256;
  std::size_t walk_length = 80;
  std::size_t walks_per_node = 10;
  std::size_t window = 10;
  double return_param = 1.0;   // p
  double inout_param = 1.0;    // q
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double initial_lr = 0.025;
  double final_lr = 0.0001;
  std::uint64_t seed = 1;
};

struct Node2VecStats {
  /// Mean negative-sampling loss per (center, context) pair for each epoch.
  std::vector<double> epoch_loss;
};

using Walk = std::vector<NodeId>;

/// walks_per_node rounds; each round starts one walk from every non-isolated
/// node. Each walk draws from its own generator seeded by (seed, round, node).
std::vector<Walk> generate_walks(const Graph& g, const Node2VecOptions& opts);

/// N x dim feature matrix. Isolated nodes keep their initialization; a graph
/// with no edges yields an all-zero matrix.
Matrix node2vec_features(const Graph& g, const Node2VecOptions& opts,
                         Node2VecStats* stats = nullptr);

/// One row per line, whitespace-separated decimals, all rows the same width.
Matrix load_features(std::string_view text);
Matrix load_features_file(const std::string& path);
std::string write_features(const Matrix& features);

}  // namespace deglink
