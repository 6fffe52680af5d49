#include "deglink/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "deglink/log.hpp"

namespace deglink {

namespace {

struct ParsedLine {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  double weight = 1.0;
};

std::runtime_error parse_error(std::size_t line_no, const std::string& what) {
  return std::runtime_error("line " + std::to_string(line_no) + ": " + what);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

std::uint64_t parse_id(std::string_view field, std::size_t line_no) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw parse_error(line_no, "expected a nonnegative integer id, got '" + std::string(field) + "'");
  }
  if (v >= std::numeric_limits<NodeId>::max()) {
    throw parse_error(line_no, "node id " + std::string(field) + " is too large");
  }
  return v;
}

double parse_weight(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v) || v < 0.0) {
    throw parse_error(line_no, "expected a nonnegative weight, got '" + std::string(field) + "'");
  }
  return v;
}

/// Calls fn(line_no, fields) for every non-comment, non-blank line.
template <typename Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    std::size_t first = 0;
    while (first < line.size() && is_space(line[first])) ++first;
    if (first == line.size() || line[first] == '#') {
      if (end == text.size()) break;
      continue;
    }
    fn(line_no, split_fields(line));
    if (end == text.size()) break;
  }
}

std::vector<ParsedLine> parse_pairs(std::string_view text, bool allow_weight) {
  std::vector<ParsedLine> out;
  for_each_record(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
    const std::size_t max_fields = allow_weight ? 3 : 2;
    if (f.size() < 2 || f.size() > max_fields) {
      throw parse_error(line_no, "expected " + std::string(allow_weight ? "2 or 3" : "2") +
                                     " fields, got " + std::to_string(f.size()));
    }
    ParsedLine p;
    p.a = parse_id(f[0], line_no);
    p.b = parse_id(f[1], line_no);
    if (f.size() == 3) p.weight = parse_weight(f[2], line_no);
    out.push_back(p);
  });
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

Graph Graph::from_edges(std::size_t num_nodes, std::span<const Edge> edges, EdgeListStats* stats) {
  EdgeListStats local;
  struct Arc {
    NodeId from;
    NodeId to;
    double weight;
    std::size_t order;
  };
  std::vector<Arc> arcs;
  arcs.reserve(edges.size() * 2);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    if (e.source >= num_nodes || e.target >= num_nodes) {
      throw std::out_of_range("edge (" + std::to_string(e.source) + ", " +
                              std::to_string(e.target) + ") out of range for " +
                              std::to_string(num_nodes) + " nodes");
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      throw std::invalid_argument("edge weights must be finite and nonnegative");
    }
    if (e.source == e.target) {
      ++local.self_loops_dropped;
      continue;
    }
    arcs.push_back({e.source, e.target, e.weight, k});
    arcs.push_back({e.target, e.source, e.weight, k});
  }
  std::sort(arcs.begin(), arcs.end(), [](const Arc& x, const Arc& y) {
    if (x.from != y.from) return x.from < y.from;
    if (x.to != y.to) return x.to < y.to;
    return x.order < y.order;
  });

  Graph g;
  g.offsets_.assign(num_nodes + 1, 0);
  std::size_t duplicate_arcs = 0;
  for (std::size_t k = 0; k < arcs.size(); ++k) {
    if (k > 0 && arcs[k].from == arcs[k - 1].from && arcs[k].to == arcs[k - 1].to) {
      ++duplicate_arcs;
      continue;
    }
    g.targets_.push_back(arcs[k].to);
    g.weights_.push_back(arcs[k].weight);
    ++g.offsets_[arcs[k].from + 1];
  }
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  local.duplicates_collapsed = duplicate_arcs / 2;
  if (stats != nullptr) *stats = local;
  return g;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> d(num_nodes());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = degree(static_cast<NodeId>(i));
  return d;
}

bool Graph::has_edge(NodeId i, NodeId j) const {
  const auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

double Graph::weight(NodeId i, NodeId j) const {
  const auto nb = neighbors(i);
  const auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return 0.0;
  return neighbor_weights(i)[static_cast<std::size_t>(it - nb.begin())];
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId i = 0; i < num_nodes(); ++i) {
    const auto nb = neighbors(i);
    const auto w = neighbor_weights(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (nb[k] > i) out.push_back({i, nb[k], w[k]});
    }
  }
  return out;
}

namespace {

// "# nodes <N>" pins the node count so trailing isolated nodes survive a round trip.
std::uint64_t declared_node_count(std::string_view text) {
  constexpr std::string_view kHeader = "# nodes ";
  if (text.substr(0, kHeader.size()) != kHeader) return 0;
  std::string_view rest = text.substr(kHeader.size());
  rest = rest.substr(0, rest.find('\n'));
  while (!rest.empty() && is_space(rest.back())) rest.remove_suffix(1);
  std::uint64_t n = 0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), n);
  if (ec != std::errc() || ptr != rest.data() + rest.size()) return 0;
  return n;
}

}  // namespace

Graph load_edge_list(std::string_view text, EdgeListStats* stats) {
  const std::vector<ParsedLine> lines = parse_pairs(text, true);
  if (lines.empty()) throw std::runtime_error("edge list is empty");
  std::uint64_t max_id = declared_node_count(text);
  if (max_id > 0) --max_id;
  std::vector<Edge> edges;
  edges.reserve(lines.size());
  for (const ParsedLine& p : lines) {
    max_id = std::max({max_id, p.a, p.b});
    edges.push_back({static_cast<NodeId>(p.a), static_cast<NodeId>(p.b), p.weight});
  }
  EdgeListStats local;
  Graph g = Graph::from_edges(static_cast<std::size_t>(max_id) + 1, edges, &local);
  if (local.self_loops_dropped > 0) {
    warn("dropped " + std::to_string(local.self_loops_dropped) + " self-loop(s)");
  }
  if (stats != nullptr) *stats = local;
  return g;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Graph load_edge_list_file(const std::string& path, EdgeListStats* stats) {
  try {
    return load_edge_list(read_text_file(path), stats);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string write_edge_list(const Graph& g) {
  const std::vector<Edge> edges = g.edges();
  const bool weighted =
      std::any_of(edges.begin(), edges.end(), [](const Edge& e) { return e.weight != 1.0; });
  std::ostringstream os;
  os.precision(17);
  // Pins N when the highest ids are isolated.
  os << "# nodes " << g.num_nodes() << '\n';
  for (const Edge& e : edges) {
    os << e.source << '\t' << e.target;
    if (weighted) os << '\t' << e.weight;
    os << '\n';
  }
  return os.str();
}

std::vector<AnchorLink> load_anchor_list(std::string_view text) {
  std::vector<AnchorLink> out;
  for (const ParsedLine& p : parse_pairs(text, false)) {
    out.push_back({static_cast<NodeId>(p.a), static_cast<NodeId>(p.b)});
  }
  if (out.empty()) throw std::runtime_error("anchor list is empty");
  return out;
}

std::vector<AnchorLink> load_anchor_list_file(const std::string& path) {
  try {
    return load_anchor_list(read_text_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string write_anchor_list(std::span<const AnchorLink> anchors) {
  std::ostringstream os;
  for (const AnchorLink& a : anchors) os << a.source << '\t' << a.target << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Partition

const char* to_string(DegreeClass c) {
  switch (c) {
    case DegreeClass::Tail:
      return "tail";
    case DegreeClass::Head:
      return "head";
    case DegreeClass::SuperHead:
      return "super_head";
  }
  return "?";
}

std::size_t DegreePartition::count(DegreeClass c) const {
  return static_cast<std::size_t>(std::count(class_of.begin(), class_of.end(), c));
}

std::size_t super_threshold_for(std::span<const std::size_t> degrees, double super_fraction) {
  if (!(super_fraction > 0.0 && super_fraction < 1.0)) {
    throw std::invalid_argument("super_fraction must lie in (0, 1)");
  }
  if (degrees.empty()) throw std::invalid_argument("cannot partition an empty graph");
  std::vector<std::size_t> order(degrees.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return degrees[a] > degrees[b]; });
  const double raw = super_fraction * static_cast<double>(degrees.size());
  const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (count >= degrees.size()) {
    const std::size_t lowest = degrees[order.back()];
    return lowest == 0 ? 0 : lowest - 1;
  }
  return degrees[order[count]];
}

DegreePartition partition_degrees(std::span<const std::size_t> degrees, std::size_t tail_threshold,
                                  std::size_t super_threshold) {
  if (super_threshold <= tail_threshold) {
    throw std::invalid_argument("super-head threshold M=" + std::to_string(super_threshold) +
                                " must exceed tail threshold D=" + std::to_string(tail_threshold));
  }
  DegreePartition p;
  p.tail_threshold = tail_threshold;
  p.super_threshold = super_threshold;
  p.class_of.resize(degrees.size());
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    if (degrees[i] <= tail_threshold) {
      p.class_of[i] = DegreeClass::Tail;
    } else if (degrees[i] > super_threshold) {
      p.class_of[i] = DegreeClass::SuperHead;
    } else {
      p.class_of[i] = DegreeClass::Head;
    }
  }
  return p;
}

DegreePartition partition_by_degree(const Graph& g, std::size_t tail_threshold,
                                    double super_fraction) {
  const std::vector<std::size_t> deg = g.degrees();
  const std::size_t m = super_threshold_for(deg, super_fraction);
  if (m <= tail_threshold) {
    throw std::invalid_argument("derived super-head threshold M=" + std::to_string(m) +
                                " does not exceed D=" + std::to_string(tail_threshold) +
                                "; set an explicit M");
  }
  return partition_degrees(deg, tail_threshold, m);
}

DegreePartition partition_with_threshold(const Graph& g, std::size_t tail_threshold,
                                         std::size_t super_threshold) {
  return partition_degrees(g.degrees(), tail_threshold, super_threshold);
}

// ---------------------------------------------------------------------------
// Views

std::size_t GraphView::num_forged() const {
  return static_cast<std::size_t>(std::count(forged_.begin(), forged_.end(), std::uint8_t{1}));
}

GraphView GraphView::unforged(const Graph& base) {
  GraphView v;
  v.base_ = &base;
  const std::size_t n = base.num_nodes();
  v.offsets_.resize(n + 1, 0);
  v.forged_.assign(n, 0);
  for (NodeId i = 0; i < n; ++i) {
    const auto nb = base.neighbors(i);
    v.targets_.insert(v.targets_.end(), nb.begin(), nb.end());
    v.offsets_[i + 1] = v.targets_.size();
  }
  return v;
}

GraphView forge_tail_view(const Graph& g, const DegreePartition& part, std::uint64_t seed) {
  if (part.class_of.size() != g.num_nodes()) {
    throw std::invalid_argument("partition size does not match graph");
  }
  GraphView v;
  v.base_ = &g;
  const std::size_t n = g.num_nodes();
  v.offsets_.resize(n + 1, 0);
  v.forged_.assign(n, 0);
  std::mt19937_64 rng(seed);
  const std::size_t d = part.tail_threshold;
  std::vector<NodeId> scratch;
  for (NodeId i = 0; i < n; ++i) {
    const auto nb = g.neighbors(i);
    if (part.class_of[i] == DegreeClass::Head && d >= 1) {
      std::uniform_int_distribution<std::size_t> pick_k(1, d);
      const std::size_t k = std::min(pick_k(rng), nb.size());
      scratch.assign(nb.begin(), nb.end());
      for (std::size_t s = 0; s < k; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, scratch.size() - 1);
        std::swap(scratch[s], scratch[pick(rng)]);
      }
      std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
      v.targets_.insert(v.targets_.end(), scratch.begin(),
                        scratch.begin() + static_cast<std::ptrdiff_t>(k));
      v.forged_[i] = 1;
    } else {
      v.targets_.insert(v.targets_.end(), nb.begin(), nb.end());
    }
    v.offsets_[i + 1] = v.targets_.size();
  }
  return v;
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<SampledPair> sample_balanced_edges(const Graph& g, std::uint64_t seed) {
  const std::vector<Edge> edges = g.edges();
  if (edges.empty()) throw std::invalid_argument("sample_balanced_edges: graph has no edges");
  std::vector<SampledPair> out;
  out.reserve(edges.size() * 2);
  for (const Edge& e : edges) out.push_back({e.source, e.target, e.weight, true});

  const auto n = static_cast<std::uint64_t>(g.num_nodes());
  const std::uint64_t possible = n * (n - 1) / 2;
  if (edges.size() >= possible) {
    warn("graph is complete; no negative pairs can be sampled");
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    for (;;) {
      const NodeId i = pick(rng);
      const NodeId j = pick(rng);
      if (i == j || g.has_edge(i, j)) continue;
      out.push_back({i, j, 0.0, false});
      break;
    }
  }
  return out;
}

}  // namespace deglink
