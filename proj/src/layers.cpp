#include "deglink/layers.hpp"

#include <cmath>

namespace deglink::nn {

Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Linear::Linear(const std::string& name, Index in_dim, Index out_dim, std::mt19937_64& rng)
    : weight(name + ".weight", glorot_uniform(in_dim, out_dim, rng)),
      bias(name + ".bias", Matrix::Zero(1, out_dim)) {}

Var Linear::forward(Tape& tape, Var x) {
  return add(matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, Index in_dim, Index hidden_dim, Index out_dim,
         std::mt19937_64& rng)
    : first(name + ".0", in_dim, hidden_dim, rng), second(name + ".1", hidden_dim, out_dim, rng) {}

Var Mlp::forward(Tape& tape, Var x) { return second.forward(tape, tanh(first.forward(tape, x))); }

void Mlp::collect(std::vector<Parameter*>& out) {
  first.collect(out);
  second.collect(out);
}

}  // namespace deglink::nn
