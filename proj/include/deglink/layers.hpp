#pragma once

#include <random>
#include <string>
#include <vector>

#include "deglink/numerics.hpp"

namespace deglink::nn {

/// Glorot-uniform initialized rows x cols matrix.
Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng);

/// y = x W + b
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, Index in_dim, Index out_dim, std::mt19937_64& rng);

  Var forward(Tape& tape, Var x);
  Index in_dim() const { return weight.value.rows(); }
  Index out_dim() const { return weight.value.cols(); }
  void collect(std::vector<Parameter*>& out);
};

/// Two fully connected layers with a tanh between them.
struct Mlp {
  Linear first;
  Linear second;

  Mlp() = default;
  Mlp(const std::string& name, Index in_dim, Index hidden_dim, Index out_dim,
      std::mt19937_64& rng);

  Var forward(Tape& tape, Var x);
  Index in_dim() const { return first.in_dim(); }
  Index out_dim() const { return second.out_dim(); }
  void collect(std::vector<Parameter*>& out);
};

}  // namespace deglink::nn
