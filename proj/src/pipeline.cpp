#include "deglink/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "deglink/checkpoint.hpp"
#include "deglink/log.hpp"

namespace deglink {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream `tag` of a base seed.
std::uint64_t stream(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(base ^ splitmix64(tag + 0x51ed2701ULL));
}

enum StreamTag : std::uint64_t {
  kForgeSource = 1,
  kForgeTarget,
  kBalancedSource,
  kBalancedTarget,
  kAnchorNegatives,
  kEncoderInit,
  kMappingInit,
  kFeaturesSource,
  kFeaturesTarget,
  kSplit,
};

const char* to_string(SplitMode m) { return m == SplitMode::TailBased ? "tail_based" : "ratio"; }

SplitMode parse_split(const std::string& s) {
  if (s == "tail_based") return SplitMode::TailBased;
  if (s == "ratio") return SplitMode::Ratio;
  throw std::invalid_argument("unknown split mode '" + s + "' (expected tail_based or ratio)");
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw std::invalid_argument("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
  return v.get<double>();
}

void parse_node2vec(const nlohmann::json& j, Node2VecOptions& o) {
  if (!j.is_object()) throw std::invalid_argument("config key 'node2vec' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "node2vec." + key;
    if (key == "walk_length") o.walk_length = get_count(v, k);
    else if (key == "walks_per_node") o.walks_per_node = get_count(v, k);
    else if (key == "window") o.window = get_count(v, k);
    else if (key == "p") o.return_param = get_real(v, k);
    else if (key == "q") o.inout_param = get_real(v, k);
    else if (key == "negatives") o.negatives = get_count(v, k);
    else if (key == "epochs") o.epochs = get_count(v, k);
    else if (key == "initial_lr") o.initial_lr = get_real(v, k);
    else if (key == "final_lr") o.final_lr = get_real(v, k);
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
}

std::vector<DegreeBucket> buckets_from_bounds(const std::vector<std::size_t>& bounds) {
  std::vector<DegreeBucket> out;
  std::size_t lower = 0;
  for (std::size_t b : bounds) {
    if (b <= lower) {
      throw std::invalid_argument("degree_buckets must be strictly increasing and positive");
    }
    out.push_back({lower, b});
    lower = b;
  }
  out.push_back({lower, std::numeric_limits<std::size_t>::max()});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid config: " + m); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) fail("mu must be >= 0");
  if (split == SplitMode::Ratio && !(train_ratio > 0.0 && train_ratio < 1.0)) {
    fail("train_ratio must lie in (0, 1)");
  }
  if (!(super_fraction > 0.0 && super_fraction < 1.0)) fail("super_fraction must lie in (0, 1)");
  for (const auto& m : {source_super_threshold, target_super_threshold}) {
    if (m && *m <= tail_threshold) fail("super-head threshold M must exceed tail threshold D");
  }
  if (dims.feature_dim < 1 || dims.hidden_dim < 1) fail("dims must be positive");
  if (dims.embedding_dim < 2 || dims.embedding_dim % 2 != 0) {
    fail("embedding_dim must be a positive even number");
  }
  if (mapping_dim < 1) fail("mapping_dim must be positive");
  if (anchor_negatives < 1) fail("anchor_negatives must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (selection_interval < 1) fail("selection_interval must be at least 1");
  if (!(node2vec.return_param > 0.0) || !(node2vec.inout_param > 0.0)) {
    fail("node2vec p and q must be positive");
  }
  if (node2vec.walk_length < 1 || node2vec.window < 1) {
    fail("node2vec walk_length and window must be positive");
  }
  if (buckets.empty()) fail("degree_buckets is empty");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["source_edges"] = source_edges;
  j["target_edges"] = target_edges;
  j["anchors"] = anchors;
  if (!source_features.empty()) j["source_features"] = source_features;
  if (!target_features.empty()) j["target_features"] = target_features;
  j["tail_threshold"] = tail_threshold;
  j["super_fraction"] = super_fraction;
  if (source_super_threshold) j["source_super_threshold"] = *source_super_threshold;
  if (target_super_threshold) j["target_super_threshold"] = *target_super_threshold;
  j["lambda"] = lambda;
  j["mu"] = mu;
  j["feature_dim"] = dims.feature_dim;
  j["hidden_dim"] = dims.hidden_dim;
  j["embedding_dim"] = dims.embedding_dim;
  j["mapping_dim"] = mapping_dim;
  j["anchor_negatives"] = anchor_negatives;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["split"] = to_string(split);
  j["train_ratio"] = train_ratio;
  j["ablation"] = to_string(ablation);
  j["node2vec"] = {{"walk_length", node2vec.walk_length},
                   {"walks_per_node", node2vec.walks_per_node},
                   {"window", node2vec.window},
                   {"p", node2vec.return_param},
                   {"q", node2vec.inout_param},
                   {"negatives", node2vec.negatives},
                   {"epochs", node2vec.epochs},
                   {"initial_lr", node2vec.initial_lr},
                   {"final_lr", node2vec.final_lr}};
  j["model_selection"] = select_best ? "best_train_mrr" : "last";
  j["selection_interval"] = selection_interval;
  nlohmann::json bounds = nlohmann::json::array();
  for (std::size_t b = 0; b + 1 < buckets.size(); ++b) bounds.push_back(buckets[b].upper);
  j["degree_buckets"] = bounds;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "source_edges") c.source_edges = resolve(get_as<std::string>(v, key), base_dir);
    else if (key == "target_edges") c.target_edges = resolve(get_as<std::string>(v, key), base_dir);
    else if (key == "anchors") c.anchors = resolve(get_as<std::string>(v, key), base_dir);
    else if (key == "source_features")
      c.source_features = resolve(get_as<std::string>(v, key), base_dir);
    else if (key == "target_features")
      c.target_features = resolve(get_as<std::string>(v, key), base_dir);
    else if (key == "tail_threshold") c.tail_threshold = get_count(v, key);
    else if (key == "super_fraction") c.super_fraction = get_real(v, key);
    else if (key == "source_super_threshold") c.source_super_threshold = get_count(v, key);
    else if (key == "target_super_threshold") c.target_super_threshold = get_count(v, key);
    else if (key == "lambda") c.lambda = get_real(v, key);
    else if (key == "mu") c.mu = get_real(v, key);
    else if (key == "feature_dim") c.dims.feature_dim = static_cast<Index>(get_count(v, key));
    else if (key == "hidden_dim") c.dims.hidden_dim = static_cast<Index>(get_count(v, key));
    else if (key == "embedding_dim") c.dims.embedding_dim = static_cast<Index>(get_count(v, key));
    else if (key == "mapping_dim") c.mapping_dim = static_cast<Index>(get_count(v, key));
    else if (key == "anchor_negatives") c.anchor_negatives = get_count(v, key);
    else if (key == "lr") c.lr = get_real(v, key);
    else if (key == "epochs") c.epochs = get_count(v, key);
    else if (key == "seed") c.seed = get_count(v, key);
    else if (key == "split") c.split = parse_split(get_as<std::string>(v, key));
    else if (key == "train_ratio") c.train_ratio = get_real(v, key);
    else if (key == "ablation") c.ablation = parse_ablation(get_as<std::string>(v, key));
    else if (key == "node2vec") parse_node2vec(v, c.node2vec);
    else if (key == "model_selection") {
      const auto s = get_as<std::string>(v, key);
      if (s == "best_train_mrr") c.select_best = true;
      else if (s == "last") c.select_best = false;
      else throw std::invalid_argument("model_selection must be best_train_mrr or last");
    } else if (key == "selection_interval") c.selection_interval = get_count(v, key);
    else if (key == "degree_buckets") {
      if (!v.is_array()) throw std::invalid_argument("degree_buckets must be an array");
      std::vector<std::size_t> bounds;
      for (const auto& b : v) bounds.push_back(get_count(b, key));
      c.buckets = buckets_from_bounds(bounds);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  const auto dir = std::filesystem::absolute(path).parent_path().string();
  return from_json(j, dir);
}

// ---------------------------------------------------------------------------
// Split

AnchorSplit split_anchors(const std::vector<AnchorLink>& anchors,
                          const DegreePartition& source_part, const DegreePartition& target_part,
                          SplitMode mode, double train_ratio, std::uint64_t seed) {
  if (anchors.empty()) throw std::invalid_argument("split_anchors: no anchors");
  AnchorSplit s;
  s.train.role = AnchorRole::Train;
  s.test.role = AnchorRole::Test;
  if (mode == SplitMode::TailBased) {
    for (const AnchorLink& a : anchors) {
      if (a.source >= source_part.class_of.size() || a.target >= target_part.class_of.size()) {
        throw std::out_of_range("split_anchors: anchor outside its graph");
      }
      const bool tail =
          source_part.is(a.source, DegreeClass::Tail) || target_part.is(a.target, DegreeClass::Tail);
      (tail ? s.test : s.train).pairs.push_back(a);
    }
  } else {
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
      throw std::invalid_argument("split_anchors: ratio must lie in (0, 1)");
    }
    std::vector<AnchorLink> shuffled = anchors;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::ceil(train_ratio * static_cast<double>(shuffled.size())));
    s.train.pairs.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.pairs.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
  }
  if (s.train.pairs.empty()) throw std::invalid_argument("split_anchors: empty training split");
  if (s.test.pairs.empty()) throw std::invalid_argument("split_anchors: empty test split");
  return s;
}

// ---------------------------------------------------------------------------
// Model

TrainedModel TrainedModel::initialize(const RunConfig& config, Matrix source_features,
                                      Matrix target_features) {
  if (source_features.cols() != config.dims.feature_dim ||
      target_features.cols() != config.dims.feature_dim) {
    throw std::invalid_argument("feature matrices must have feature_dim = " +
                                std::to_string(config.dims.feature_dim) + " columns, got " +
                                shape_string(source_features) + " and " +
                                shape_string(target_features));
  }
  TrainedModel m;
  m.config = config;
  m.encoder = EncoderParams::init(config.dims, stream(config.seed, kEncoderInit));
  m.mapping = MappingNets::init(config.dims.embedding_dim, config.mapping_dim,
                                stream(config.seed, kMappingInit));
  m.source_features = std::move(source_features);
  m.target_features = std::move(target_features);
  return m;
}

std::vector<nn::Parameter*> TrainedModel::parameters() {
  std::vector<nn::Parameter*> out;
  encoder.collect(out);
  mapping.collect(out);
  return out;
}

namespace {

nlohmann::json trace_to_json(const TrainingTrace& t) {
  return {{"loss", t.loss},
          {"train_mrr", t.train_mrr},
          {"checked_epochs", t.checked_epochs},
          {"best_epoch", t.best_epoch},
          {"epoch_seconds", t.epoch_seconds}};
}

TrainingTrace trace_from_json(const nlohmann::json& j) {
  TrainingTrace t;
  t.loss = j.at("loss").get<std::vector<double>>();
  t.train_mrr = j.at("train_mrr").get<std::vector<double>>();
  t.checked_epochs = j.at("checked_epochs").get<std::vector<std::size_t>>();
  t.best_epoch = j.at("best_epoch").get<std::size_t>();
  t.epoch_seconds = j.at("epoch_seconds").get<std::vector<double>>();
  return t;
}

constexpr const char* kSourceFeatures = "features.source";
constexpr const char* kTargetFeatures = "features.target";

}  // namespace

void TrainedModel::save(const std::string& path) const {
  TensorArchive a;
  a.metadata = nlohmann::json{{"format", "deglink-model"},
                              {"config", config.to_json()},
                              {"trace", trace_to_json(trace)}}
                   .dump();
  auto& self = const_cast<TrainedModel&>(*this);
  for (nn::Parameter* p : self.parameters()) a.tensors.emplace_back(p->name, p->value);
  a.tensors.emplace_back(kSourceFeatures, source_features);
  a.tensors.emplace_back(kTargetFeatures, target_features);
  write_archive(path, a);
}

TrainedModel TrainedModel::load(const std::string& path) {
  const TensorArchive a = read_archive(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(a.metadata);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": corrupt checkpoint metadata: " + e.what());
  }
  if (meta.value("format", "") != "deglink-model") {
    throw std::runtime_error(path + ": not a model checkpoint");
  }
  const RunConfig config = RunConfig::from_json(meta.at("config"));
  if (!a.contains(kSourceFeatures) || !a.contains(kTargetFeatures)) {
    throw std::runtime_error(path + ": checkpoint lacks feature matrices");
  }
  TrainedModel m = initialize(config, a.at(kSourceFeatures), a.at(kTargetFeatures));
  for (nn::Parameter* p : m.parameters()) {
    if (!a.contains(p->name)) throw std::runtime_error(path + ": missing tensor " + p->name);
    const Matrix& v = a.at(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error(path + ": tensor " + p->name + " has shape " + shape_string(v) +
                               ", expected " + shape_string(p->value));
    }
    p->value = v;
  }
  m.trace = trace_from_json(meta.at("trace"));
  return m;
}

// ---------------------------------------------------------------------------
// Inputs

DegreePartition partition_for(const Graph& g, const RunConfig& config,
                              const std::optional<std::size_t>& explicit_m) {
  if (explicit_m) return partition_with_threshold(g, config.tail_threshold, *explicit_m);
  return partition_by_degree(g, config.tail_threshold, config.super_fraction);
}

RunInputs prepare_inputs(const RunConfig& config, Graph source, Graph target,
                         std::vector<AnchorLink> anchors, std::optional<Matrix> source_features,
                         std::optional<Matrix> target_features) {
  AnchorSet check{anchors, AnchorRole::Train};
  check.validate(source.num_nodes(), target.num_nodes());
  std::unordered_set<NodeId> targets;
  for (const AnchorLink& a : anchors) {
    if (!targets.insert(a.target).second) {
      throw std::invalid_argument("duplicate anchor target id " + std::to_string(a.target));
    }
  }

  RunInputs in;
  in.source_part = partition_for(source, config, config.source_super_threshold);
  in.target_part = partition_for(target, config, config.target_super_threshold);

  auto features_for = [&](const Graph& g, std::optional<Matrix>& given, StreamTag tag,
                          const char* which) {
    if (given) {
      if (given->rows() != static_cast<Index>(g.num_nodes()) ||
          given->cols() != config.dims.feature_dim) {
        throw std::invalid_argument(std::string(which) + " features have shape " +
                                    shape_string(*given) + ", expected " +
                                    std::to_string(g.num_nodes()) + "x" +
                                    std::to_string(config.dims.feature_dim));
      }
      return std::move(*given);
    }
    Node2VecOptions o = config.node2vec;
    o.dim = config.dims.feature_dim;
    o.seed = stream(config.seed, tag);
    return node2vec_features(g, o);
  };
  in.source_features = features_for(source, source_features, kFeaturesSource, "source");
  in.target_features = features_for(target, target_features, kFeaturesTarget, "target");
  in.source = std::move(source);
  in.target = std::move(target);
  in.anchors = std::move(anchors);
  return in;
}

RunInputs load_inputs(const RunConfig& config) {
  if (config.source_edges.empty() || config.target_edges.empty() || config.anchors.empty()) {
    throw std::invalid_argument("config needs source_edges, target_edges and anchors");
  }
  Graph source = load_edge_list_file(config.source_edges);
  Graph target = load_edge_list_file(config.target_edges);
  auto anchors = load_anchor_list_file(config.anchors);
  std::optional<Matrix> xs;
  std::optional<Matrix> xt;
  if (!config.source_features.empty()) xs = load_features_file(config.source_features);
  if (!config.target_features.empty()) xt = load_features_file(config.target_features);
  return prepare_inputs(config, std::move(source), std::move(target), std::move(anchors),
                        std::move(xs), std::move(xt));
}

// ---------------------------------------------------------------------------
// Training

Trainer::Trainer(const RunConfig& config, const RunInputs& inputs, const AnchorSet& train_anchors)
    : config_(config),
      inputs_(inputs),
      train_(train_anchors),
      model_(TrainedModel::initialize(config, inputs.source_features, inputs.target_features)),
      optimizer_(config.lr) {
  config.validate();
  if (train_anchors.pairs.empty()) throw std::invalid_argument("train: no training anchors");
  train_anchors.validate(inputs.source.num_nodes(), inputs.target.num_nodes());
  params_ = model_.parameters();
}

double Trainer::run_epoch(std::size_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t base = config_.seed + epoch;
  const bool forge = config_.ablation != Ablation::NoAbsentPredictor;
  const GraphView vs = forge ? forge_tail_view(inputs_.source, inputs_.source_part,
                                               stream(base, kForgeSource))
                             : GraphView::unforged(inputs_.source);
  const GraphView vt = forge ? forge_tail_view(inputs_.target, inputs_.target_part,
                                               stream(base, kForgeTarget))
                             : GraphView::unforged(inputs_.target);

  nn::Tape tape;
  auto [es, et] = forward_pair(tape, vs, vt, inputs_.source_part, inputs_.target_part,
                               model_.source_features, model_.target_features, model_.encoder,
                               config_.ablation);

  const std::size_t p = config_.anchor_negatives;
  const auto negatives = sample_anchor_negatives(train_.pairs, inputs_.target.num_nodes(), p,
                                                 stream(base, kAnchorNegatives));
  std::vector<Index> src_rows;
  std::vector<Index> tgt_rows;
  for (const AnchorLink& a : train_.pairs) {
    src_rows.push_back(a.source);
    tgt_rows.push_back(a.target);
  }
  std::vector<Index> neg_rows(negatives.begin(), negatives.end());
  nn::Var o_src = model_.mapping.source.forward(tape, nn::gather_rows(es.embedding, src_rows));
  nn::Var o_pos = model_.mapping.target.forward(tape, nn::gather_rows(et.embedding, tgt_rows));
  nn::Var o_neg = model_.mapping.target.forward(tape, nn::gather_rows(et.embedding, neg_rows));
  nn::Var lt = matching_loss_rows(o_src, o_pos, o_neg, p);

  const auto ss = sample_balanced_edges(inputs_.source, stream(base, kBalancedSource));
  const auto st = sample_balanced_edges(inputs_.target, stream(base, kBalancedTarget));
  nn::Var ls1 = topology_loss(es.embedding, ss);
  nn::Var ls2 = topology_loss(et.embedding, st);
  nn::Var lp1 = constraint_loss(tape, es);
  nn::Var lp2 = constraint_loss(tape, et);
  nn::Var loss = total_loss(lt, ls1, ls2, lp1, lp2, config_.lambda, config_.mu);

  const double value = loss.scalar();
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch));
  }
  tape.backward(loss);
  optimizer_.step(params_);

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  model_.trace.loss.push_back(value);
  model_.trace.epoch_seconds.push_back(secs);
  return value;
}

double Trainer::train_mrr() {
  const MappedEmbeddings mapped = embed(model_, inputs_);
  std::vector<bool> none(static_cast<std::size_t>(mapped.target.rows()), false);
  std::vector<std::size_t> ranks;
  ranks.reserve(train_.size());
  for (const AnchorLink& a : train_.pairs) {
    const auto row = mapped.source.row(a.source);
    ranks.push_back(rank_of({row.data(), static_cast<std::size_t>(row.size())}, mapped.target,
                            none, a.target));
  }
  return mean_reciprocal_rank(ranks);
}

TrainedModel Trainer::run() {
  std::vector<Matrix> best;
  double best_mrr = -1.0;
  auto check = [&](std::size_t epoch) {
    const double mrr = train_mrr();
    model_.trace.train_mrr.push_back(mrr);
    model_.trace.checked_epochs.push_back(epoch);
    if (mrr > best_mrr) {
      best_mrr = mrr;
      model_.trace.best_epoch = epoch;
      best.clear();
      for (const nn::Parameter* p : params_) best.push_back(p->value);
    }
  };
  if (config_.select_best) check(0);
  for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
    const double loss = run_epoch(epoch);
    info("epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
    if (config_.select_best &&
        (epoch % config_.selection_interval == 0 || epoch == config_.epochs)) {
      check(epoch);
    }
  }
  if (config_.select_best) {
    for (std::size_t k = 0; k < params_.size(); ++k) params_[k]->value = best[k];
  } else {
    model_.trace.best_epoch = config_.epochs;
  }
  for (nn::Parameter* p : params_) {
    p->zero_grad();
    p->first_moment = Matrix();
    p->second_moment = Matrix();
  }
  return std::move(model_);
}

TrainedModel train(const RunConfig& config, const RunInputs& inputs,
                   const AnchorSet& train_anchors) {
  Trainer t(config, inputs, train_anchors);
  return t.run();
}

// ---------------------------------------------------------------------------
// Evaluation

MappedEmbeddings embed(TrainedModel& model, const RunInputs& inputs) {
  const GraphView vs = GraphView::unforged(inputs.source);
  const GraphView vt = GraphView::unforged(inputs.target);
  nn::Tape tape;
  auto [es, et] = forward_pair(tape, vs, vt, inputs.source_part, inputs.target_part,
                               model.source_features, model.target_features, model.encoder,
                               model.config.ablation);
  MappedEmbeddings out;
  out.source = model.mapping.source.forward(tape, es.embedding).value();
  out.target = model.mapping.target.forward(tape, et.embedding).value();
  return out;
}

MetricsReport evaluate_embeddings(const MappedEmbeddings& mapped, const Graph& source,
                                  const AnchorSet& train, const AnchorSet& test,
                                  const std::vector<DegreeBucket>& buckets) {
  if (test.pairs.empty()) throw std::invalid_argument("evaluate: no test anchors");
  std::vector<bool> excluded(static_cast<std::size_t>(mapped.target.rows()), false);
  for (const AnchorLink& a : train.pairs) excluded.at(a.target) = true;
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> degrees;
  for (const AnchorLink& a : test.pairs) {
    const auto row = mapped.source.row(a.source);
    ranks.push_back(rank_of({row.data(), static_cast<std::size_t>(row.size())}, mapped.target,
                            excluded, a.target));
    degrees.push_back(source.degree(a.source));
  }
  return summarize_ranks(ranks, degrees, buckets);
}

MetricsReport evaluate(TrainedModel& model, const RunInputs& inputs, const AnchorSet& train,
                       const AnchorSet& test) {
  test.validate(inputs.source.num_nodes(), inputs.target.num_nodes());
  MetricsReport r =
      evaluate_embeddings(embed(model, inputs), inputs.source, train, test, model.config.buckets);
  r.seed = model.config.seed;
  r.config = model.config.to_json();
  return r;
}

AnchorSplit split_for(const RunConfig& config, const RunInputs& inputs) {
  return split_anchors(inputs.anchors, inputs.source_part, inputs.target_part, config.split,
                       config.train_ratio, stream(config.seed, kSplit));
}

RunResult run_experiment(const RunConfig& config, const RunInputs& inputs) {
  AnchorSplit split = split_for(config, inputs);
  TrainedModel model = train(config, inputs, split.train);
  MetricsReport report = evaluate(model, inputs, split.train, split.test);
  return {std::move(model), std::move(split), std::move(report)};
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "variant   Hits@1   Hits@10  Hits@30  MRR\n";
  for (const auto& [ablation, r] : reports) {
    std::string name = to_string(ablation);
    name.resize(8, ' ');
    os << name << "  " << r.hits_at(1) << "   " << r.hits_at(10) << "   " << r.hits_at(30)
       << "   " << r.mrr << '\n';
  }
  return os.str();
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [ablation, r] : reports) j[to_string(ablation)] = r.to_json();
  return j;
}

AblationResult ablate(const RunConfig& config, const RunInputs& inputs) {
  AblationResult out;
  for (Ablation a : {Ablation::Full, Ablation::NoAbsentPredictor, Ablation::NoNoiseRemover}) {
    RunConfig c = config;
    c.ablation = a;
    out.reports.emplace_back(a, run_experiment(c, inputs).report);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

// Erdos-Gallai test for a graphical degree sequence.
bool is_graphical(std::vector<std::size_t> d) {
  std::sort(d.begin(), d.end(), std::greater<>());
  const std::size_t n = d.size();
  unsigned long long total = 0;
  for (std::size_t k : d) total += k;
  if (total % 2 != 0) return false;
  unsigned long long left = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    left += d[k - 1];
    unsigned long long right = static_cast<unsigned long long>(k) * (k - 1);
    for (std::size_t i = k; i < n; ++i) right += std::min(d[i], k);
    if (left > right) return false;
  }
  return true;
}

}  // namespace

SyntheticPair generate_synthetic_pair(const SyntheticOptions& opts) {
  if (opts.n < 20) throw std::invalid_argument("synthetic graphs need n >= 20");
  if (!(opts.exponent > 1.0)) throw std::invalid_argument("power-law exponent must exceed 1");
  if (!(opts.noise >= 0.0)) throw std::invalid_argument("noise ratio must be >= 0");
  if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) {
    throw std::invalid_argument("dropout must lie in [0, 1)");
  }
  if (!(opts.anchor_overlap > 0.0 && opts.anchor_overlap <= 1.0)) {
    throw std::invalid_argument("anchor_overlap must lie in (0, 1]");
  }
  if (opts.min_degree < 1) throw std::invalid_argument("min_degree must be at least 1");
  const std::size_t n = opts.n;
  std::size_t kmax = opts.max_degree;
  if (kmax == 0) {
    kmax = static_cast<std::size_t>(std::pow(static_cast<double>(n), 1.0 / (opts.exponent - 1.0)));
  }
  kmax = std::min(kmax, n - 1);
  if (kmax < opts.min_degree) throw std::invalid_argument("max_degree below min_degree");

  std::mt19937_64 rng(opts.seed);
  std::vector<double> pmf;
  for (std::size_t k = opts.min_degree; k <= kmax; ++k) {
    pmf.push_back(std::pow(static_cast<double>(k), -opts.exponent));
  }
  std::discrete_distribution<std::size_t> degree_dist(pmf.begin(), pmf.end());

  std::vector<std::size_t> degrees(n);
  bool feasible = false;
  for (int attempt = 0; attempt < 10 && !feasible; ++attempt) {
    for (auto& d : degrees) d = opts.min_degree + degree_dist(rng);
    // An odd stub count gets one extra stub on a random node below the cap.
    if (std::accumulate(degrees.begin(), degrees.end(), std::size_t{0}) % 2 != 0) {
      std::vector<NodeId> room;
      for (NodeId i = 0; i < n; ++i) {
        if (degrees[i] < kmax) room.push_back(i);
      }
      if (!room.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, room.size() - 1);
        ++degrees[room[pick(rng)]];
      }
    }
    feasible = is_graphical(degrees);
  }
  if (!feasible) throw std::runtime_error("could not sample a graphical degree sequence in 10 tries");

  std::vector<NodeId> stubs;
  for (NodeId i = 0; i < n; ++i) stubs.insert(stubs.end(), degrees[i], i);
  std::shuffle(stubs.begin(), stubs.end(), rng);
  std::vector<Edge> e1;
  for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) e1.push_back({stubs[k], stubs[k + 1]});
  EdgeListStats stats;
  Graph g1 = Graph::from_edges(n, e1, &stats);

  // Graph 2 before relabeling.
  std::bernoulli_distribution keep(1.0 - opts.dropout);
  std::set<std::pair<NodeId, NodeId>> kept;
  for (const Edge& e : g1.edges()) {
    if (keep(rng)) kept.insert({e.source, e.target});
  }
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return g1.degree(a) > g1.degree(b); });
  const std::size_t top = std::max<std::size_t>(1, (n + 9) / 10);
  std::vector<double> top_weights;
  for (std::size_t k = 0; k < top; ++k) {
    top_weights.push_back(static_cast<double>(std::max<std::size_t>(1, g1.degree(order[k]))));
  }
  std::discrete_distribution<std::size_t> hub(top_weights.begin(), top_weights.end());
  std::uniform_int_distribution<NodeId> any(0, static_cast<NodeId>(n - 1));
  const auto wanted =
      static_cast<std::size_t>(std::llround(opts.noise * static_cast<double>(g1.num_edges())));
  std::size_t added = 0;
  for (std::size_t tries = 0; added < wanted && tries < 100 * wanted + 100; ++tries) {
    NodeId u = order[hub(rng)];
    NodeId v = any(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (kept.insert({u, v}).second) ++added;
  }
  if (added < wanted) {
    warn("synthetic: placed " + std::to_string(added) + " of " + std::to_string(wanted) +
         " noise edges");
  }

  std::vector<NodeId> relabel(n);
  std::iota(relabel.begin(), relabel.end(), 0);
  std::shuffle(relabel.begin(), relabel.end(), rng);
  std::vector<Edge> e2;
  e2.reserve(kept.size());
  for (const auto& [u, v] : kept) e2.push_back({relabel[u], relabel[v]});

  std::vector<NodeId> members(n);
  std::iota(members.begin(), members.end(), 0);
  std::shuffle(members.begin(), members.end(), rng);
  const auto overlap = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opts.anchor_overlap * static_cast<double>(n))));
  members.resize(std::min(overlap, n));
  std::sort(members.begin(), members.end());

  SyntheticPair out;
  out.source = std::move(g1);
  out.target = Graph::from_edges(n, e2);
  for (NodeId i : members) out.anchors.push_back({i, relabel[i]});
  return out;
}

}  // namespace deglink
