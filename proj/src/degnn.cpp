#include "deglink/degnn.hpp"

#include <random>
#include <stdexcept>

namespace deglink {

namespace {

constexpr double kAttentionSlope = 0.2;

nn::Parameter random_parameter(const std::string& name, Index rows, Index cols,
                               std::mt19937_64& rng) {
  return nn::Parameter(name, nn::glorot_uniform(rows, cols, rng));
}

}  // namespace

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::Full:
      return "full";
    case Ablation::NoAbsentPredictor:
      return "no_AP";
    case Ablation::NoNoiseRemover:
      return "no_NR";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "no_AP") return Ablation::NoAbsentPredictor;
  if (s == "no_NR") return Ablation::NoNoiseRemover;
  throw std::invalid_argument("unknown ablation '" + s + "' (expected full, no_AP or no_NR)");
}

// ---------------------------------------------------------------------------
// Parameters

NeighborhoodPredictor::NeighborhoodPredictor(const std::string& name, Index dim,
                                             std::mt19937_64& rng)
    : scale_weight(random_parameter(name + ".scale_weight", 2 * dim, dim, rng)),
      missing_vector(random_parameter(name + ".missing_vector", 1, dim, rng)),
      redundant_vector(random_parameter(name + ".redundant_vector", 1, dim, rng)),
      missing_shift(name + ".missing_shift", 2 * dim, dim, dim, rng),
      redundant_shift(name + ".redundant_shift", 2 * dim, dim, dim, rng) {
  // start from a zero pseudo-message; W_gamma and the hidden layers stay random so gradients flow
  missing_vector.value.setZero();
  redundant_vector.value.setZero();
  missing_shift.second.weight.value.setZero();
  redundant_shift.second.weight.value.setZero();
}

void NeighborhoodPredictor::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&scale_weight);
  out.push_back(&missing_vector);
  out.push_back(&redundant_vector);
  missing_shift.collect(out);
  redundant_shift.collect(out);
}

LayerParams::LayerParams(const std::string& name, AggregatorKind kind_, Index in_dim,
                         Index out_dim, std::mt19937_64& rng)
    : kind(kind_),
      transform(name + ".transform", in_dim, out_dim, rng),
      predictor(name + ".predictor", in_dim, rng) {
  if (kind == AggregatorKind::Local) {
    attn_self = random_parameter(name + ".attn_self", out_dim, 1, rng);
    attn_neighbor = random_parameter(name + ".attn_neighbor", out_dim, 1, rng);
  }
}

void LayerParams::collect(std::vector<nn::Parameter*>& out) {
  transform.collect(out);
  if (kind == AggregatorKind::Local) {
    out.push_back(&attn_self);
    out.push_back(&attn_neighbor);
  }
  predictor.collect(out);
}

EncoderParams EncoderParams::init(const EncoderDims& dims, std::uint64_t seed) {
  if (dims.feature_dim < 1 || dims.hidden_dim < 1 || dims.embedding_dim < 2 ||
      dims.embedding_dim % 2 != 0) {
    throw std::invalid_argument("encoder dims must be positive and embedding_dim even");
  }
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.dims = dims;
  const Index half = dims.embedding_dim / 2;
  p.global_layers.emplace_back("global.0", AggregatorKind::Global, dims.feature_dim,
                               dims.hidden_dim, rng);
  p.global_layers.emplace_back("global.1", AggregatorKind::Global, dims.hidden_dim, half, rng);
  p.local_layers.emplace_back("local.0", AggregatorKind::Local, dims.feature_dim, dims.hidden_dim,
                              rng);
  p.local_layers.emplace_back("local.1", AggregatorKind::Local, dims.hidden_dim, half, rng);
  return p;
}

void EncoderParams::collect(std::vector<nn::Parameter*>& out) {
  for (LayerParams& l : global_layers) l.collect(out);
  for (LayerParams& l : local_layers) l.collect(out);
}

// ---------------------------------------------------------------------------
// Plans

std::vector<DegreeClass> correction_classes(const DegreePartition& part, const GraphView& view) {
  if (part.class_of.size() != view.num_nodes()) {
    throw std::invalid_argument("partition size " + std::to_string(part.class_of.size()) +
                                " does not match view size " + std::to_string(view.num_nodes()));
  }
  std::vector<DegreeClass> classes = part.class_of;
  for (NodeId i = 0; i < classes.size(); ++i) {
    if (view.is_forged(i)) classes[i] = DegreeClass::Tail;
  }
  return classes;
}

CorrectionPlan plan_corrections(const GraphView& view, const DegreePartition& part,
                                Ablation ablation) {
  CorrectionPlan plan;
  const std::size_t n = view.num_nodes();
  plan.num_nodes = n;
  plan.classes = correction_classes(part, view);
  plan.predict_missing = ablation != Ablation::NoAbsentPredictor;
  plan.predict_redundant = ablation != Ablation::NoNoiseRemover;
  plan.missing_indicator.assign(n, 0.0);
  plan.redundant_indicator.assign(n, 0.0);

  auto mean = std::make_shared<nn::EdgeIndex>();
  mean->in_rows = static_cast<Index>(n);
  auto agg = std::make_shared<nn::EdgeIndex>();
  agg->in_rows = static_cast<Index>(2 * n);
  std::vector<double> mean_w;
  std::vector<double> conv_w;

  for (NodeId i = 0; i < n; ++i) {
    const auto nb = view.neighbors(i);
    for (NodeId k : nb) {
      mean->push(k);
      mean_w.push_back(1.0 / static_cast<double>(nb.size()));
    }
    mean->close_row();

    const bool missing = plan.predict_missing && plan.classes[i] == DegreeClass::Tail;
    const bool redundant = plan.predict_redundant && plan.classes[i] == DegreeClass::SuperHead;
    plan.missing_indicator[i] = missing ? 1.0 : 0.0;
    plan.redundant_indicator[i] = redundant ? 1.0 : 0.0;
    const bool corrected = missing || redundant;
    const double inv = 1.0 / static_cast<double>(nb.size() + 1 + (corrected ? 1 : 0));
    agg->push(i);
    for (NodeId k : nb) agg->push(k);
    if (corrected) agg->push(n + i);
    for (std::size_t c = 0; c < nb.size() + 1 + (corrected ? 1 : 0); ++c) conv_w.push_back(inv);
    agg->close_row();
  }
  plan.mean_index = std::move(mean);
  plan.aggregation_index = std::move(agg);
  plan.mean_weights = Eigen::Map<Matrix>(mean_w.data(), static_cast<Index>(mean_w.size()), 1);
  plan.conv_weights = Eigen::Map<Matrix>(conv_w.data(), static_cast<Index>(conv_w.size()), 1);
  return plan;
}

// ---------------------------------------------------------------------------
// Predictors

Matrix neighborhood_mean(const Matrix& H, const GraphView& view, NodeId i) {
  Matrix out = Matrix::Zero(1, H.cols());
  const auto nb = view.neighbors(i);
  if (nb.empty()) return out;
  for (NodeId k : nb) out += H.row(k);
  return out / static_cast<double>(nb.size());
}

nn::Var local_context(nn::Var H, const CorrectionPlan& plan) {
  nn::Tape& tape = *H.tape;
  nn::Var pooled = nn::edge_aggregate(plan.mean_index, tape.constant(plan.mean_weights), H);
  return nn::concat_cols(H, pooled);
}

namespace {

nn::Var localize(nn::Tape& tape, nn::Var scale, nn::Parameter& global_vector, nn::Mlp& shift,
                 nn::Var context) {
  return nn::add(nn::mul(scale, tape.parameter(global_vector)), shift.forward(tape, context));
}

}  // namespace

nn::Var predict_missing(nn::Tape& tape, nn::Var context, NeighborhoodPredictor& p) {
  nn::Var scale = nn::matmul(context, tape.parameter(p.scale_weight));
  return localize(tape, scale, p.missing_vector, p.missing_shift, context);
}

nn::Var predict_redundant(nn::Tape& tape, nn::Var context, NeighborhoodPredictor& p) {
  nn::Var scale = nn::matmul(context, tape.parameter(p.scale_weight));
  return localize(tape, scale, p.redundant_vector, p.redundant_shift, context);
}

// ---------------------------------------------------------------------------
// Aggregation

LayerResult corrected_aggregate(nn::Tape& tape, nn::Var H, const CorrectionPlan& plan,
                                LayerParams& layer, bool final_layer) {
  if (H.rows() != static_cast<Index>(plan.num_nodes) || H.cols() != layer.in_dim()) {
    throw std::invalid_argument("corrected_aggregate: activations " + shape_string(H.value()) +
                                " do not match " + std::to_string(plan.num_nodes) + " nodes x " +
                                std::to_string(layer.in_dim()) + " dims");
  }
  LayerResult result;
  const Index n = static_cast<Index>(plan.num_nodes);

  // Correction pseudo-messages: +m_i for tails, -r_i for super heads, zero rows elsewhere.
  nn::Var correction = tape.constant(Matrix::Zero(n, layer.in_dim()));
  if (plan.predict_missing || plan.predict_redundant) {
    nn::Var context = local_context(H, plan);
    NeighborhoodPredictor& p = layer.predictor;
    nn::Var scale = nn::matmul(context, tape.parameter(p.scale_weight));
    if (plan.predict_missing) {
      result.missing = localize(tape, scale, p.missing_vector, p.missing_shift, context);
      correction = nn::add(correction, nn::row_scale(*result.missing, plan.missing_indicator));
    }
    if (plan.predict_redundant) {
      result.redundant = localize(tape, scale, p.redundant_vector, p.redundant_shift, context);
      correction =
          nn::sub(correction, nn::row_scale(*result.redundant, plan.redundant_indicator));
    }
  }

  nn::Var weight = tape.parameter(layer.transform.weight);
  nn::Var transformed = nn::matmul(H, weight);
  nn::Var messages = nn::concat_rows(transformed, nn::matmul(correction, weight));

  nn::Var aggregated;
  if (layer.kind == AggregatorKind::Global) {
    aggregated = nn::edge_aggregate(plan.aggregation_index, tape.constant(plan.conv_weights),
                                    messages);
  } else {
    nn::Var self_scores = nn::matmul(transformed, tape.parameter(layer.attn_self));
    nn::Var key_scores = nn::matmul(messages, tape.parameter(layer.attn_neighbor));
    nn::Var logits = nn::leaky_relu(
        nn::edge_scores(plan.aggregation_index, self_scores, key_scores), kAttentionSlope);
    nn::Var attention = nn::segment_softmax(plan.aggregation_index, logits);
    aggregated = nn::edge_aggregate(plan.aggregation_index, attention, messages);
  }
  nn::Var out = nn::add(aggregated, tape.parameter(layer.transform.bias));
  result.output = final_layer ? out : nn::tanh(out);
  return result;
}

EncoderOutput encode(nn::Tape& tape, const Matrix& features, const CorrectionPlan& plan,
                     EncoderParams& params) {
  if (features.cols() != params.dims.feature_dim) {
    throw std::invalid_argument("encode: feature dim " + std::to_string(features.cols()) +
                                " does not match encoder input dim " +
                                std::to_string(params.dims.feature_dim));
  }
  if (features.rows() != static_cast<Index>(plan.num_nodes)) {
    throw std::invalid_argument("encode: " + std::to_string(features.rows()) +
                                " feature rows for " + std::to_string(plan.num_nodes) + " nodes");
  }
  EncoderOutput out;
  out.classes = plan.classes;
  nn::Var x = tape.constant(features);

  auto run_stack = [&](std::vector<LayerParams>& layers, AggregatorKind kind,
                       std::vector<nn::Var>& activations) {
    nn::Var h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      LayerResult r = corrected_aggregate(tape, h, plan, layers[l], l + 1 == layers.size());
      out.caches.push_back({kind, l, r.missing, r.redundant});
      activations.push_back(r.output);
      h = r.output;
    }
    return h;
  };
  nn::Var global = run_stack(params.global_layers, AggregatorKind::Global, out.global_activations);
  nn::Var local = run_stack(params.local_layers, AggregatorKind::Local, out.local_activations);
  out.embedding = nn::concat_cols(global, local);
  return out;
}

std::pair<EncoderOutput, EncoderOutput> forward_pair(nn::Tape& tape, const GraphView& source_view,
                                                     const GraphView& target_view,
                                                     const DegreePartition& source_part,
                                                     const DegreePartition& target_part,
                                                     const Matrix& source_features,
                                                     const Matrix& target_features,
                                                     EncoderParams& params, Ablation ablation) {
  const CorrectionPlan source_plan = plan_corrections(source_view, source_part, ablation);
  const CorrectionPlan target_plan = plan_corrections(target_view, target_part, ablation);
  EncoderOutput a = encode(tape, source_features, source_plan, params);
  EncoderOutput b = encode(tape, target_features, target_plan, params);
  return {std::move(a), std::move(b)};
}

}  // namespace deglink
