#include "deglink/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "deglink/log.hpp"

namespace deglink {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t walk_seed(std::uint64_t seed, std::uint64_t round, std::uint64_t node) {
  return splitmix64(splitmix64(splitmix64(seed) ^ round) ^ node);
}

NodeId next_step(const Graph& g, NodeId prev, NodeId cur, const Node2VecOptions& opts,
                 std::mt19937_64& rng, std::vector<double>& cumulative) {
  const auto nb = g.neighbors(cur);
  if (opts.return_param == 1.0 && opts.inout_param == 1.0) {
    std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
    return nb[pick(rng)];
  }
  cumulative.resize(nb.size());
  double total = 0.0;
  for (std::size_t k = 0; k < nb.size(); ++k) {
    double w = 1.0 / opts.inout_param;
    if (nb[k] == prev) {
      w = 1.0 / opts.return_param;
    } else if (g.has_edge(prev, nb[k])) {
      w = 1.0;
    }
    total += w;
    cumulative[k] = total;
  }
  std::uniform_real_distribution<double> u(0.0, total);
  const double x = u(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  if (it == cumulative.end()) --it;
  return nb[static_cast<std::size_t>(it - cumulative.begin())];
}

double log_sigmoid(double x) {
  // log(1 / (1 + e^-x)) without overflow.
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<Walk> generate_walks(const Graph& g, const Node2VecOptions& opts) {
  if (opts.return_param <= 0.0 || opts.inout_param <= 0.0) {
    throw std::invalid_argument("node2vec: p and q must be positive");
  }
  std::vector<Walk> walks;
  std::vector<double> cumulative;
  const std::size_t n = g.num_nodes();
  for (std::size_t round = 0; round < opts.walks_per_node; ++round) {
    for (NodeId start = 0; start < n; ++start) {
      if (g.degree(start) == 0) continue;
      std::mt19937_64 rng(walk_seed(opts.seed, round, start));
      Walk walk;
      walk.reserve(opts.walk_length);
      walk.push_back(start);
      while (walk.size() < opts.walk_length) {
        const NodeId cur = walk.back();
        if (walk.size() == 1) {
          const auto nb = g.neighbors(cur);
          std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
          walk.push_back(nb[pick(rng)]);
        } else {
          walk.push_back(next_step(g, walk[walk.size() - 2], cur, opts, rng, cumulative));
        }
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

Matrix node2vec_features(const Graph& g, const Node2VecOptions& opts, Node2VecStats* stats) {
  if (opts.dim < 1) throw std::invalid_argument("node2vec: dim must be at least 1");
  const auto n = static_cast<Index>(g.num_nodes());
  const Index dim = opts.dim;
  if (g.num_edges() == 0) {
    warn("node2vec: graph has no edges; returning all-zero features");
    if (stats != nullptr) stats->epoch_loss.clear();
    return Matrix::Zero(n, dim);
  }

  std::mt19937_64 rng(splitmix64(opts.seed ^ 0x5eedULL));
  Matrix emb(n, dim);
  {
    const double bound = 0.5 / static_cast<double>(dim);
    std::uniform_real_distribution<double> init(-bound, bound);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < dim; ++c) emb(i, c) = init(rng);
    }
  }
  Matrix ctx = Matrix::Zero(n, dim);

  std::vector<Walk> walks = generate_walks(g, opts);

  // Unigram^0.75 noise distribution over walk occurrences.
  std::vector<double> noise_cdf(static_cast<std::size_t>(n), 0.0);
  {
    std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
    for (const Walk& w : walks) {
      for (NodeId v : w) counts[v] += 1.0;
    }
    double total = 0.0;
    for (std::size_t v = 0; v < counts.size(); ++v) {
      total += std::pow(counts[v], 0.75);
      noise_cdf[v] = total;
    }
  }
  std::uniform_real_distribution<double> noise_u(0.0, noise_cdf.back());
  auto draw_noise = [&]() {
    auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), noise_u(rng));
    if (it == noise_cdf.end()) --it;
    return static_cast<NodeId>(it - noise_cdf.begin());
  };

  std::size_t corpus_tokens = 0;
  for (const Walk& w : walks) corpus_tokens += w.size();
  const double total_tokens = static_cast<double>(corpus_tokens * std::max<std::size_t>(opts.epochs, 1));
  std::size_t processed = 0;

  std::vector<std::size_t> order(walks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::Matrix<double, 1, Eigen::Dynamic> grad_in(dim);
  std::uniform_int_distribution<std::size_t> window_pick(1, std::max<std::size_t>(opts.window, 1));

  if (stats != nullptr) stats->epoch_loss.clear();
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t w_idx : order) {
      const Walk& walk = walks[w_idx];
      for (std::size_t pos = 0; pos < walk.size(); ++pos, ++processed) {
        const double progress = static_cast<double>(processed) / total_tokens;
        const double lr = std::max(opts.final_lr,
                                   opts.initial_lr - (opts.initial_lr - opts.final_lr) * progress);
        const std::size_t span = window_pick(rng);
        const std::size_t lo = pos >= span ? pos - span : 0;
        const std::size_t hi = std::min(walk.size() - 1, pos + span);
        auto in = emb.row(walk[pos]);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          grad_in.setZero();
          const NodeId context = walk[c];
          for (std::size_t s = 0; s <= opts.negatives; ++s) {
            NodeId out_node = context;
            double label = 1.0;
            if (s > 0) {
              out_node = draw_noise();
              if (out_node == context) continue;
              label = 0.0;
            }
            auto out = ctx.row(out_node);
            const double f = in.dot(out);
            loss_sum -= label > 0.0 ? log_sigmoid(f) : log_sigmoid(-f);
            const double step = (label - sigmoid(f)) * lr;
            grad_in.noalias() += step * out;
            out.noalias() += step * in;
          }
          in += grad_in;
          ++pairs;
        }
      }
    }
    const double mean_loss = pairs > 0 ? loss_sum / static_cast<double>(pairs) : 0.0;
    if (stats != nullptr) stats->epoch_loss.push_back(mean_loss);
    if (!emb.allFinite()) {
      throw std::runtime_error("node2vec: non-finite embedding after epoch " +
                               std::to_string(epoch + 1));
    }
  }
  return emb;
}

Matrix load_features(std::string_view text) {
  std::vector<double> values;
  Index width = -1;
  Index rows = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    Index count = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i == line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, v);
      if (ec != std::errc() || ptr != line.data() + j || !std::isfinite(v)) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad value '" +
                                 std::string(line.substr(i, j - i)) + "'");
      }
      values.push_back(v);
      ++count;
      i = j;
    }
    if (count == 0) continue;
    if (width < 0) {
      width = count;
    } else if (count != width) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " columns, got " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("feature file is empty");
  Matrix m(rows, width);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

Matrix load_features_file(const std::string& path) {
  try {
    return load_features(read_text_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string write_features(const Matrix& features) {
  std::string out;
  char buf[32];
  for (Index r = 0; r < features.rows(); ++r) {
    for (Index c = 0; c < features.cols(); ++c) {
      if (c > 0) out += ' ';
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), features(r, c));
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

}  // namespace deglink
