#pragma once

// Dense rank-2 tensors with a tape-based reverse-mode differentiator.
//
// Every tensor is a row-major Eigen matrix; vectors are 1 x d rows and
// scalars are 1 x 1. Ops append a node to the Tape that produced their
// inputs and register a closure that maps the output gradient onto the
// input gradients. Sparse message-passing ops take an EdgeIndex (CSR
// grouped by output row).

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deglink {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_string(const Matrix& m);

}  // namespace deglink

namespace deglink::nn {

/// A trainable tensor together with its gradient and adaptive-moment buffers.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(loss)/d(node) into every reachable Parameter::grad.
  /// Throws if the tape was already consumed by a previous call.
  void backward(Var loss);

  // Op-author interface.
  Var record(Matrix value, bool requires_grad, BackwardFn fn);
  void accumulate(Var v, const Matrix& contribution);
  /// Gradient buffer for v, allocated (zeroed) on first use.
  Matrix& grad_buffer(Var v);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Sparse message-passing structure: for each output row, a contiguous run of
/// edges [offsets[r], offsets[r+1]) naming input rows in `sources`.
struct EdgeIndex {
  Index out_rows = 0;
  Index in_rows = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> sources;

  std::size_t num_edges() const { return sources.size(); }
  void push(std::size_t source) { sources.push_back(source); }
  void close_row() {
    offsets.push_back(sources.size());
    ++out_rows;
  }
};

using EdgeIndexPtr = std::shared_ptr<const EdgeIndex>;

// Dense ops. Binary elementwise ops accept a 1 x n right operand that is
// broadcast over the rows of the left operand.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var mean_rows(Var a);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var gather_rows(Var a, std::vector<Index> rows);
/// Multiplies row r by the constant factors[r].
Var row_scale(Var a, std::vector<double> factors);
/// Row-wise cosine similarity, n x 1. Rows with norm below 1e-12 give 0.
Var cosine_rows(Var a, Var b);
/// Sum of squared entries, 1 x 1.
Var sum_squares(Var a);
Var sum(Var a);

// Sparse ops over an EdgeIndex.
/// out[r] = sum_e weights[e] * values[src(e)]; weights is E x 1.
Var edge_aggregate(const EdgeIndexPtr& index, Var weights, Var values);
/// out[e] = row_scores[r(e)] + source_scores[src(e)]; inputs are column vectors.
Var edge_scores(const EdgeIndexPtr& index, Var row_scores, Var source_scores);
/// Softmax over the edges of each output row (max-subtracted).
Var segment_softmax(const EdgeIndexPtr& index, Var logits);

// Plain-matrix helpers shared with non-differentiable code paths.
double cosine(std::span<const double> a, std::span<const double> b);
bool all_finite(const Matrix& m);

/// Adaptive-moment optimizer. Moment buffers live on each Parameter.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update to every parameter and zeroes the gradients.
  /// A non-finite gradient aborts the step before any parameter changes.
  void step(std::span<Parameter* const> params);

  long steps_taken() const { return step_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_ = 0;
};

}  // namespace deglink::nn
