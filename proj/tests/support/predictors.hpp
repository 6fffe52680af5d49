#pragma once

// Predictors are initialised to a zero pseudo-message; tests of the correction paths fill them in.

#include <cstdint>
#include <random>
#include <vector>

#include "deglink/degnn.hpp"
#include "gradcheck.hpp"

namespace deglink::testing {

inline void randomize_predictor(NeighborhoodPredictor& p, std::mt19937_64& rng, double scale = 0.5) {
  std::vector<nn::Parameter*> ps;
  p.collect(ps);
  for (nn::Parameter* q : ps) q->value = random_matrix(q->value.rows(), q->value.cols(), rng, scale);
}

inline void randomize_predictors(EncoderParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::vector<LayerParams>* stack : {&params.global_layers, &params.local_layers}) {
    for (LayerParams& layer : *stack) randomize_predictor(layer.predictor, rng);
  }
}

}  // namespace deglink::testing
