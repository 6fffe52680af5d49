#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "deglink/graph.hpp"
#include "deglink/log.hpp"

using namespace deglink;

namespace {

Graph random_graph(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(n - 1));
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < m; ++k) edges.push_back({pick(rng), pick(rng)});
  return Graph::from_edges(n, edges);
}

Graph star(std::size_t leaves) {
  std::vector<Edge> edges;
  for (NodeId i = 1; i <= leaves; ++i) edges.push_back({0, i});
  return Graph::from_edges(leaves + 1, edges);
}

struct QuietWarnings {
  QuietWarnings() { set_warnings_enabled(false); }
  ~QuietWarnings() { set_warnings_enabled(true); }
};

}  // namespace

TEST_CASE("edge-list parsing") {
  QuietWarnings quiet;
  EdgeListStats stats;
  Graph g = load_edge_list("0 1\n1 0", &stats);
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 1);
  CHECK(stats.duplicates_collapsed == 1);

  g = load_edge_list("0 0\n0 1", &stats);
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 1);
  CHECK(stats.self_loops_dropped == 1);

  g = load_edge_list("# comment\n\n2\t3\n0 2 0.5\n");
  CHECK(g.num_nodes() == 4);
  CHECK(g.num_edges() == 2);
  CHECK(g.weight(0, 2) == 0.5);
  CHECK(g.weight(2, 0) == 0.5);
  CHECK(g.weight(0, 3) == 0.0);
  CHECK(g.degree(1) == 0);

  CHECK_THROWS(load_edge_list(""));
  CHECK_THROWS(load_edge_list("# only a comment\n"));
  try {
    (void)load_edge_list("0 1\n0 x\n");
    FAIL("malformed line accepted");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS(load_edge_list("0 1\n-1 2\n"));
  CHECK_THROWS(load_edge_list("0 1 -3\n"));
  CHECK_THROWS(load_edge_list("0\n"));
}

TEST_CASE("graph invariants and edge-list round trip on random graphs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 5 + seed * 3;
    Graph g = random_graph(n, n * 2, seed);
    for (NodeId i = 0; i < n; ++i) {
      auto nb = g.neighbors(i);
      CHECK(std::is_sorted(nb.begin(), nb.end()));
      CHECK(std::adjacent_find(nb.begin(), nb.end()) == nb.end());
      for (NodeId j : nb) {
        CHECK(j != i);
        CHECK(j < n);
        CHECK(g.has_edge(j, i));
      }
    }
    // Round trip keeps trailing isolated nodes.
    Graph reloaded = load_edge_list(write_edge_list(g));
    CHECK(reloaded == g);
  }
  std::vector<Edge> w{{0, 1, 2.5}, {1, 2, 1.0}};
  Graph weighted = Graph::from_edges(5, w);
  CHECK(load_edge_list(write_edge_list(weighted)) == weighted);
}

TEST_CASE("anchor lists") {
  auto anchors = load_anchor_list("# src dst\n3 0\n1 7\n");
  REQUIRE(anchors.size() == 2);
  CHECK(anchors[0] == AnchorLink{3, 0});
  CHECK(anchors[1] == AnchorLink{1, 7});
  CHECK(load_anchor_list(write_anchor_list(anchors)) == anchors);
  CHECK_THROWS(load_anchor_list("1\n"));
}

TEST_CASE("degree partition") {
  SUBCASE("star with explicit M is all tail") {
    const DegreePartition p = partition_with_threshold(star(3), 5, 10);
    CHECK(p.count(DegreeClass::Tail) == 4);
  }
  SUBCASE("degrees 1..20 with D=5 and the top 10%") {
    std::vector<std::size_t> deg;
    for (std::size_t d = 1; d <= 20; ++d) deg.push_back(d);
    const std::size_t m = super_threshold_for(deg, 0.10);
    CHECK(m == 18);
    const DegreePartition p = partition_degrees(deg, 5, m);
    CHECK(p.count(DegreeClass::SuperHead) == 2);
    CHECK(p.count(DegreeClass::Tail) == 5);
    CHECK(p.is(18, DegreeClass::SuperHead));
    CHECK(p.is(19, DegreeClass::SuperHead));
    CHECK(p.is(17, DegreeClass::Head));
  }
  SUBCASE("derived M not above D is an error") {
    CHECK_THROWS_AS(partition_by_degree(star(3), 5, 0.10), std::invalid_argument);
    CHECK_THROWS_AS(partition_with_threshold(star(3), 5, 5), std::invalid_argument);
  }
  SUBCASE("classes follow the thresholds and cover every node") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Graph g = random_graph(60, 400, seed);
      const DegreePartition p = partition_with_threshold(g, 5, 16);
      CHECK(p.count(DegreeClass::Tail) + p.count(DegreeClass::Head) +
                p.count(DegreeClass::SuperHead) ==
            g.num_nodes());
      for (NodeId i = 0; i < g.num_nodes(); ++i) {
        const std::size_t d = g.degree(i);
        const DegreeClass want =
            d <= 5 ? DegreeClass::Tail : (d > 16 ? DegreeClass::SuperHead : DegreeClass::Head);
        CHECK(p.class_of[i] == want);
      }
    }
  }
  SUBCASE("isolated nodes are tail") {
    Graph g = Graph::from_edges(3, std::vector<Edge>{{0, 1}});
    CHECK(partition_with_threshold(g, 0, 1).is(2, DegreeClass::Tail));
  }
}

TEST_CASE("forged tail views") {
  // Node 0 has 20 neighbors and is the only head node.
  Graph g = star(20);
  const DegreePartition part = partition_with_threshold(g, 5, 25);
  REQUIRE(part.is(0, DegreeClass::Head));

  SUBCASE("bounds, subset and determinism") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      GraphView v = forge_tail_view(g, part, seed);
      CHECK(v.is_forged(0));
      CHECK(v.degree(0) >= 1);
      CHECK(v.degree(0) <= 5);
      for (NodeId j : v.neighbors(0)) CHECK(g.has_edge(0, j));
      for (NodeId i = 1; i <= 20; ++i) {
        CHECK_FALSE(v.is_forged(i));
        CHECK(v.degree(i) == 1);
      }
    }
    GraphView a = forge_tail_view(g, part, 42);
    GraphView b = forge_tail_view(g, part, 42);
    CHECK(std::ranges::equal(a.neighbors(0), b.neighbors(0)));
  }

  SUBCASE("mean forged degree over 10000 seeds is 3") {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      total += static_cast<double>(forge_tail_view(g, part, seed).degree(0));
    }
    CHECK(std::abs(total / 10000.0 - 3.0) < 0.05);
  }

  SUBCASE("random graphs: only heads are forged and nothing is added") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Graph r = random_graph(80, 600, seed);
      const DegreePartition p = partition_with_threshold(r, 5, 20);
      GraphView v = forge_tail_view(r, p, seed);
      for (NodeId i = 0; i < r.num_nodes(); ++i) {
        auto eff = v.neighbors(i);
        auto base = r.neighbors(i);
        CHECK(std::includes(base.begin(), base.end(), eff.begin(), eff.end()));
        if (v.is_forged(i)) {
          CHECK(p.is(i, DegreeClass::Head));
          CHECK(eff.size() >= 1);
          CHECK(eff.size() <= 5);
        } else {
          CHECK_FALSE(p.is(i, DegreeClass::Head));
          CHECK(std::ranges::equal(eff, base));
        }
      }
      CHECK(v.num_forged() == p.count(DegreeClass::Head));
    }
  }

  SUBCASE("the identity view forges nothing") {
    GraphView v = GraphView::unforged(g);
    CHECK(v.num_forged() == 0);
    CHECK(v.degree(0) == 20);
  }
}

TEST_CASE("balanced edge sampling") {
  QuietWarnings quiet;
  SUBCASE("triangle has no negatives") {
    Graph tri = Graph::from_edges(3, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}});
    auto s = sample_balanced_edges(tri, 1);
    CHECK(s.size() == 3);
    CHECK(std::ranges::all_of(s, [](const SampledPair& p) { return p.positive; }));
  }
  SUBCASE("path 0-1-2 samples (0,2) as its only negative") {
    Graph path = Graph::from_edges(3, std::vector<Edge>{{0, 1}, {1, 2}});
    auto s = sample_balanced_edges(path, 7);
    REQUIRE(s.size() == 4);
    int negatives = 0;
    for (const SampledPair& p : s) {
      if (p.positive) continue;
      ++negatives;
      CHECK(std::min(p.i, p.j) == 0);
      CHECK(std::max(p.i, p.j) == 2);
      CHECK(p.target == 0.0);
    }
    CHECK(negatives == 2);
  }
  SUBCASE("random graphs: balance and genuine non-edges") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Graph g = random_graph(50, 120, seed);
      auto s = sample_balanced_edges(g, seed);
      std::size_t pos = 0;
      std::size_t neg = 0;
      for (const SampledPair& p : s) {
        CHECK(p.i != p.j);
        if (p.positive) {
          ++pos;
          CHECK(g.has_edge(p.i, p.j));
          CHECK(p.target == g.weight(p.i, p.j));
        } else {
          ++neg;
          CHECK_FALSE(g.has_edge(p.i, p.j));
          CHECK(p.target == 0.0);
        }
      }
      CHECK(pos == g.num_edges());
      CHECK(neg == g.num_edges());
      // same seed, same samples
      auto again = sample_balanced_edges(g, seed);
      CHECK(std::ranges::equal(s, again, [](const SampledPair& a, const SampledPair& b) {
        return a.i == b.i && a.j == b.j && a.positive == b.positive;
      }));
    }
  }
}
