#include "deglink/uil.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace deglink {

MappingNets MappingNets::init(Index in_dim, Index out_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MappingNets m;
  m.source = nn::Mlp("map.source", in_dim, 2 * in_dim, out_dim, rng);
  m.target = nn::Mlp("map.target", in_dim, 2 * in_dim, out_dim, rng);
  return m;
}

void MappingNets::collect(std::vector<nn::Parameter*>& out) {
  source.collect(out);
  target.collect(out);
}

void AnchorSet::validate(std::size_t n_source, std::size_t n_target) const {
  std::unordered_set<NodeId> seen;
  for (const AnchorLink& a : pairs) {
    if (a.source >= n_source || a.target >= n_target) {
      throw std::out_of_range("anchor (" + std::to_string(a.source) + ", " +
                              std::to_string(a.target) + ") outside graphs of " +
                              std::to_string(n_source) + " and " + std::to_string(n_target) +
                              " nodes");
    }
    if (!seen.insert(a.source).second) {
      throw std::invalid_argument("duplicate anchor source id " + std::to_string(a.source));
    }
  }
}

// ---------------------------------------------------------------------------
// Losses

nn::Var topology_loss(nn::Var embeddings, std::span<const SampledPair> samples) {
  nn::Tape& tape = *embeddings.tape;
  std::vector<Index> left;
  std::vector<Index> right;
  Matrix targets(static_cast<Index>(samples.size()), 1);
  left.reserve(samples.size());
  right.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    left.push_back(samples[k].i);
    right.push_back(samples[k].j);
    targets(static_cast<Index>(k), 0) = samples[k].target;
  }
  nn::Var sim = nn::cosine_rows(nn::gather_rows(embeddings, std::move(left)),
                                nn::gather_rows(embeddings, std::move(right)));
  return nn::sum_squares(nn::sub(tape.constant(std::move(targets)), sim));
}

std::vector<NodeId> sample_anchor_negatives(std::span<const AnchorLink> anchors,
                                            std::size_t target_nodes, std::size_t p,
                                            std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("matching loss needs at least one negative per anchor");
  if (target_nodes < p + 1) {
    throw std::invalid_argument("target graph has " + std::to_string(target_nodes) +
                                " nodes; need at least p+1=" + std::to_string(p + 1));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, target_nodes - 2);
  std::vector<NodeId> out;
  out.reserve(anchors.size() * p);
  for (const AnchorLink& a : anchors) {
    for (std::size_t k = 0; k < p; ++k) {
      std::size_t b = pick(rng);
      if (b >= a.target) ++b;
      out.push_back(static_cast<NodeId>(b));
    }
  }
  return out;
}

nn::Var matching_loss_rows(nn::Var source, nn::Var matched, nn::Var negatives, std::size_t p) {
  nn::Tape& tape = *source.tape;
  const Index anchors = source.rows();
  if (matched.rows() != anchors || negatives.rows() != anchors * static_cast<Index>(p)) {
    throw std::invalid_argument("matching_loss: expected " + std::to_string(anchors) + " and " +
                                std::to_string(anchors * static_cast<Index>(p)) +
                                " rows, got " + shape_string(matched.value()) + " and " +
                                shape_string(negatives.value()));
  }
  nn::Var positive = nn::cosine_rows(source, matched);
  nn::Var pos_term = nn::sum_squares(nn::sub(tape.constant(Matrix::Ones(anchors, 1)), positive));
  std::vector<Index> repeat;
  repeat.reserve(static_cast<std::size_t>(anchors) * p);
  for (Index a = 0; a < anchors; ++a) {
    for (std::size_t k = 0; k < p; ++k) repeat.push_back(a);
  }
  nn::Var source_neg = nn::cosine_rows(nn::gather_rows(source, repeat), negatives);
  nn::Var matched_neg = nn::cosine_rows(nn::gather_rows(matched, std::move(repeat)), negatives);
  return nn::add(pos_term, nn::add(nn::sum_squares(source_neg), nn::sum_squares(matched_neg)));
}

nn::Var matching_loss(nn::Var mapped_source, nn::Var mapped_target,
                      std::span<const AnchorLink> anchors, std::size_t p, std::uint64_t seed) {
  const std::vector<NodeId> negatives = sample_anchor_negatives(
      anchors, static_cast<std::size_t>(mapped_target.rows()), p, seed);
  std::vector<Index> src;
  std::vector<Index> tgt;
  for (const AnchorLink& a : anchors) {
    src.push_back(a.source);
    tgt.push_back(a.target);
  }
  std::vector<Index> neg(negatives.begin(), negatives.end());
  return matching_loss_rows(nn::gather_rows(mapped_source, std::move(src)),
                            nn::gather_rows(mapped_target, std::move(tgt)),
                            nn::gather_rows(mapped_target, std::move(neg)), p);
}

nn::Var constraint_loss(nn::Tape& tape, const EncoderOutput& encoded) {
  std::vector<double> not_tail(encoded.classes.size());
  std::vector<double> not_super(encoded.classes.size());
  for (std::size_t i = 0; i < encoded.classes.size(); ++i) {
    not_tail[i] = encoded.classes[i] == DegreeClass::Tail ? 0.0 : 1.0;
    not_super[i] = encoded.classes[i] == DegreeClass::SuperHead ? 0.0 : 1.0;
  }
  nn::Var total = tape.constant(Matrix::Zero(1, 1));
  for (const PredictionCache& c : encoded.caches) {
    if (c.missing) total = nn::add(total, nn::sum_squares(nn::row_scale(*c.missing, not_tail)));
    if (c.redundant) {
      total = nn::add(total, nn::sum_squares(nn::row_scale(*c.redundant, not_super)));
    }
  }
  return total;
}

nn::Var total_loss(nn::Var matching, nn::Var topology_source, nn::Var topology_target,
                   nn::Var constraint_source, nn::Var constraint_target, double lambda, double mu) {
  nn::Var topo = nn::scale(nn::add(topology_source, topology_target), lambda);
  nn::Var constraint = nn::scale(nn::add(constraint_source, constraint_target), mu);
  return nn::add(nn::add(matching, topo), constraint);
}

double total_loss(double matching, double topology_source, double topology_target,
                  double constraint_source, double constraint_target, double lambda, double mu) {
  return matching + lambda * (topology_source + topology_target) +
         mu * (constraint_source + constraint_target);
}

// ---------------------------------------------------------------------------
// Ranking

std::vector<double> similarity_scores(std::span<const double> query, const Matrix& candidates) {
  if (static_cast<Index>(query.size()) != candidates.cols()) {
    throw std::invalid_argument("similarity_scores: query of length " +
                                std::to_string(query.size()) + " against candidates " +
                                shape_string(candidates));
  }
  std::vector<double> s(static_cast<std::size_t>(candidates.rows()));
  for (Index r = 0; r < candidates.rows(); ++r) {
    s[static_cast<std::size_t>(r)] =
        nn::cosine(query, {candidates.row(r).data(), static_cast<std::size_t>(candidates.cols())});
  }
  return s;
}

std::vector<NodeId> rank_candidates(std::span<const double> query, const Matrix& targets,
                                    const std::vector<bool>& excluded) {
  const std::vector<double> s = similarity_scores(query, targets);
  std::vector<NodeId> ids;
  for (NodeId j = 0; j < s.size(); ++j) {
    if (j < excluded.size() && excluded[j]) continue;
    ids.push_back(j);
  }
  if (ids.empty()) throw std::invalid_argument("rank_candidates: empty candidate set");
  std::sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  });
  return ids;
}

std::size_t rank_of(std::span<const double> query, const Matrix& targets,
                    const std::vector<bool>& excluded, NodeId truth) {
  if (truth >= targets.rows()) throw std::out_of_range("rank_of: truth id out of range");
  if (truth < excluded.size() && excluded[truth]) {
    throw std::logic_error("rank_of: target " + std::to_string(truth) +
                           " is excluded from the candidate pool");
  }
  const std::vector<double> s = similarity_scores(query, targets);
  const double st = s[truth];
  std::size_t rank = 1;
  for (NodeId j = 0; j < s.size(); ++j) {
    if (j == truth || (j < excluded.size() && excluded[j])) continue;
    if (s[j] > st || (s[j] == st && j < truth)) ++rank;
  }
  return rank;
}

double hits_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (k < 1) throw std::invalid_argument("hits_at_k: k must be at least 1");
  if (ranks.empty()) throw std::invalid_argument("hits_at_k: no ranks");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("hits_at_k: ranks are 1-based");
    if (r <= k) total += static_cast<double>(k - (r - 1)) / static_cast<double>(k);
  }
  return total / static_cast<double>(ranks.size());
}

double mean_reciprocal_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: no ranks");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("mrr: ranks are 1-based");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

// ---------------------------------------------------------------------------
// Reports

std::string DegreeBucket::label() const {
  const std::string hi =
      upper == std::numeric_limits<std::size_t>::max() ? "inf" : std::to_string(upper);
  return "(" + std::to_string(lower) + "," + hi + "]";
}

std::vector<DegreeBucket> default_degree_buckets() {
  return {{0, 2}, {2, 5}, {5, 10}, {10, 50}, {50, 200}, {200, std::numeric_limits<std::size_t>::max()}};
}

double MetricsReport::hits_at(std::size_t k) const {
  for (const auto& [kk, v] : hits) {
    if (kk == k) return v;
  }
  throw std::out_of_range("report has no Hits@" + std::to_string(k));
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  nlohmann::json h = nlohmann::json::object();
  for (const auto& [k, v] : hits) h[std::to_string(k)] = v;
  j["hits"] = h;
  j["mrr"] = mrr;
  nlohmann::json buckets = nlohmann::json::array();
  for (const BucketMetric& b : per_bucket_mrr) {
    nlohmann::json e;
    e["interval"] = b.bucket.label();
    e["lower"] = b.bucket.lower;
    if (b.bucket.upper == std::numeric_limits<std::size_t>::max()) {
      e["upper"] = nullptr;
    } else {
      e["upper"] = b.bucket.upper;
    }
    e["mrr"] = b.mrr;
    e["count"] = b.count;
    buckets.push_back(e);
  }
  j["per_bucket_mrr"] = buckets;
  j["num_test"] = num_test;
  j["seed"] = seed;
  j["config"] = config;
  return j;
}

MetricsReport summarize_ranks(std::span<const std::size_t> ranks,
                              std::span<const std::size_t> source_degrees,
                              const std::vector<DegreeBucket>& buckets) {
  if (ranks.size() != source_degrees.size()) {
    throw std::invalid_argument("summarize_ranks: ranks and degrees differ in length");
  }
  if (buckets.empty() || buckets.front().lower != 0 ||
      buckets.back().upper != std::numeric_limits<std::size_t>::max()) {
    throw std::invalid_argument("degree buckets must start at 0 and end unbounded");
  }
  for (std::size_t b = 1; b < buckets.size(); ++b) {
    if (buckets[b].lower != buckets[b - 1].upper) {
      throw std::invalid_argument("degree buckets must be contiguous");
    }
  }
  MetricsReport report;
  report.num_test = ranks.size();
  for (std::size_t k : {1, 10, 30}) report.hits.emplace_back(k, hits_at_k(ranks, k));
  report.mrr = mean_reciprocal_rank(ranks);
  for (const DegreeBucket& b : buckets) {
    std::vector<std::size_t> in_bucket;
    for (std::size_t a = 0; a < ranks.size(); ++a) {
      const std::size_t d = source_degrees[a];
      const bool first = &b == &buckets.front();
      if ((d > b.lower || (first && d == 0)) && d <= b.upper) in_bucket.push_back(ranks[a]);
    }
    BucketMetric m;
    m.bucket = b;
    m.count = in_bucket.size();
    m.mrr = in_bucket.empty() ? 0.0 : mean_reciprocal_rank(in_bucket);
    report.per_bucket_mrr.push_back(m);
  }
  return report;
}

}  // namespace deglink
