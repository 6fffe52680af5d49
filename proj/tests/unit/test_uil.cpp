#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "deglink/uil.hpp"
#include "gradcheck.hpp"

using namespace deglink;
using deglink::testing::check_gradients;
using deglink::testing::contract;
using deglink::testing::random_matrix;
using nn::Tape;
using nn::Var;

namespace {

double cos_oracle(const Matrix& a, Index i, const Matrix& b, Index j) {
  const double na = a.row(i).norm();
  const double nb = b.row(j).norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.row(i).dot(b.row(j)) / (na * nb);
}

std::span<const double> row_span(const Matrix& m, Index r) {
  // Matrix is row-major.
  return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

TEST_CASE("hits and mrr examples") {
  const std::vector<std::size_t> ones{1, 1, 1};
  CHECK(hits_at_k(ones, 10) == 1.0);
  CHECK(mean_reciprocal_rank(ones) == 1.0);
  CHECK(hits_at_k(std::vector<std::size_t>{10}, 10) == doctest::Approx(0.1));
  CHECK(hits_at_k(std::vector<std::size_t>{1, 2, 7}, 5) == doctest::Approx(0.6));
  CHECK(mean_reciprocal_rank(std::vector<std::size_t>{1, 2, 4}) == doctest::Approx(7.0 / 12.0));

  CHECK_THROWS(hits_at_k(ones, 0));
  CHECK_THROWS(mean_reciprocal_rank(std::vector<std::size_t>{}));
  CHECK_THROWS(mean_reciprocal_rank(std::vector<std::size_t>{0}));
}

TEST_CASE("metrics agree with a direct summation on random rank lists") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(1, 200);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> ranks(1000);
    for (std::size_t& r : ranks) r = pick(rng);
    double rr = 0.0;
    double h[3] = {0, 0, 0};
    const std::size_t ks[3] = {1, 10, 30};
    for (std::size_t r : ranks) {
      rr += 1.0 / static_cast<double>(r);
      for (int k = 0; k < 3; ++k) {
        const double v = (static_cast<double>(ks[k]) - static_cast<double>(r - 1)) / ks[k];
        h[k] += std::max(0.0, v);
      }
    }
    CHECK(mean_reciprocal_rank(ranks) == rr / 1000.0);
    for (int k = 0; k < 3; ++k) CHECK(hits_at_k(ranks, ks[k]) == doctest::Approx(h[k] / 1000.0));
    const double h1 = hits_at_k(ranks, 1);
    const double h10 = hits_at_k(ranks, 10);
    const double h30 = hits_at_k(ranks, 30);
    CHECK(0.0 <= h1);
    CHECK(h1 <= h10);
    CHECK(h10 <= h30);
    CHECK(h30 <= 1.0);
  }
}

TEST_CASE("candidate ranking") {
  SUBCASE("exact match first") {
    Matrix t = Matrix::Identity(4, 4);
    const std::vector<double> q{0, 0, 2, 0};
    CHECK(rank_candidates(q, t, {}).front() == 2);
    CHECK(rank_of(q, t, {}, 2) == 1);
  }
  SUBCASE("ties in ascending id") {
    Matrix t = Matrix::Ones(5, 3);
    const std::vector<double> q{1, 2, 3};
    CHECK(rank_candidates(q, t, {}) == std::vector<NodeId>{0, 1, 2, 3, 4});
    CHECK(rank_candidates(q, t, {false, true, false, true}) == std::vector<NodeId>{0, 2, 4});
    CHECK(rank_of(q, t, {}, 3) == 4);
  }
  SUBCASE("errors") {
    Matrix t = Matrix::Ones(2, 3);
    const std::vector<double> q{1, 2, 3};
    CHECK_THROWS(rank_candidates(q, t, {true, true}));
    CHECK_THROWS(rank_of(q, t, {true, false}, 0));
    CHECK_THROWS(rank_candidates(std::vector<double>{1, 2}, t, {}));
  }
  SUBCASE("random instances match a sort oracle and are scale invariant") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix t = random_matrix(20, 6, rng);
      const Matrix qm = random_matrix(1, 6, rng);
      std::vector<bool> excl(20, false);
      for (int k = 0; k < 4; ++k) excl[rng() % 20] = true;

      std::vector<std::pair<double, NodeId>> oracle;
      for (NodeId j = 0; j < 20; ++j) {
        if (!excl[j]) oracle.emplace_back(-cos_oracle(qm, 0, t, j), j);
      }
      std::sort(oracle.begin(), oracle.end());
      std::vector<NodeId> want;
      for (const auto& [s, j] : oracle) want.push_back(j);

      const auto got = rank_candidates(row_span(qm, 0), t, excl);
      CHECK(got == want);
      for (std::size_t pos = 0; pos < got.size(); ++pos) {
        CHECK(rank_of(row_span(qm, 0), t, excl, got[pos]) == pos + 1);
      }

      // Powers of two keep every cosine bit-identical.
      Matrix scaled = t;
      for (Index r = 0; r < 20; ++r) scaled.row(r) *= std::ldexp(1.0, static_cast<int>(r % 7) - 3);
      const Matrix q8 = qm * 8.0;
      CHECK(rank_candidates(row_span(q8, 0), scaled, excl) == got);
      Matrix odd = t;
      for (Index r = 0; r < 20; ++r) odd.row(r) *= 0.3 + 0.17 * static_cast<double>(r);
      CHECK(rank_candidates(row_span(qm, 0), odd, excl) == got);
    }
  }
}

TEST_CASE("random embeddings give the harmonic-number MRR") {
  // With 100 exchangeable candidates the true target's rank is uniform on
  // 1..100, so E[MRR] = H_100 / 100.
  double h100 = 0.0;
  for (int r = 1; r <= 100; ++r) h100 += 1.0 / r;
  const double expected = h100 / 100.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix src(100, 16);
    Matrix tgt(100, 16);
    for (Index k = 0; k < src.size(); ++k) src.data()[k] = nd(rng);
    for (Index k = 0; k < tgt.size(); ++k) tgt.data()[k] = nd(rng);
    std::vector<std::size_t> ranks;
    for (NodeId a = 0; a < 100; ++a) ranks.push_back(rank_of(row_span(src, a), tgt, {}, a));
    total += mean_reciprocal_rank(ranks) * 100.0;
    count += 100;
  }
  // 2000 draws, per-draw sd of 1/r is about 0.117; 4 sigma of the mean.
  CHECK(std::abs(total / static_cast<double>(count) - expected) < 0.0105);
}

TEST_CASE("topology loss") {
  Tape t;
  Matrix z(4, 2);
  z << 1, 0, 1, 0, 0, 1, -1, 1;
  Var Z = t.constant(z);
  const std::vector<SampledPair> same{{0, 1, 1.0, true}};
  CHECK(topology_loss(Z, same).scalar() == 0.0);
  const std::vector<SampledPair> orth{{0, 2, 0.0, false}};
  CHECK(topology_loss(Z, orth).scalar() == 0.0);

  const std::vector<SampledPair> mixed{{0, 1, 1.0, true},  {1, 3, 1.0, true},  {2, 3, 1.0, true},
                                       {0, 2, 0.0, false}, {0, 3, 0.0, false}, {1, 2, 0.0, false}};
  double want = 0.0;
  for (const SampledPair& s : mixed) {
    const double c = cos_oracle(z, s.i, z, s.j);
    want += (s.target - c) * (s.target - c);
  }
  CHECK(topology_loss(Z, mixed).scalar() == doctest::Approx(want).epsilon(1e-14));
  CHECK(want > 0.0);
}

TEST_CASE("matching loss") {
  SUBCASE("colinear anchors and orthogonal negatives give zero") {
    Tape t;
    Matrix s(2, 4);
    s << 1, 0, 0, 0, 0, 1, 0, 0;
    Matrix m = 3.0 * s;
    Matrix neg(4, 4);
    neg << 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 2, 0, 0, 0, 1, 1;
    CHECK(matching_loss_rows(t.constant(s), t.constant(m), t.constant(neg), 2).scalar() == 0.0);
    // a negative aligned with its anchor is penalized twice
    neg.row(0) = s.row(0);
    CHECK(matching_loss_rows(t.constant(s), t.constant(m), t.constant(neg), 2).scalar() ==
          doctest::Approx(2.0));
    CHECK_THROWS(matching_loss_rows(t.constant(s), t.constant(m), t.constant(neg), 3));
  }
  SUBCASE("three anchors, two negatives, hand summation") {
    std::mt19937_64 rng(8);
    const Matrix O1 = random_matrix(6, 5, rng);
    const Matrix O2 = random_matrix(7, 5, rng);
    const std::vector<AnchorLink> anchors{{0, 3}, {2, 1}, {5, 6}};
    const std::size_t p = 2;
    const auto negs = sample_anchor_negatives(anchors, 7, p, 21);
    double want = 0.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double pos = cos_oracle(O1, anchors[a].source, O2, anchors[a].target);
      want += (1.0 - pos) * (1.0 - pos);
      for (std::size_t k = 0; k < p; ++k) {
        const NodeId b = negs[a * p + k];
        const double tib = cos_oracle(O1, anchors[a].source, O2, b);
        const double tab = cos_oracle(O2, anchors[a].target, O2, b);
        want += tib * tib + tab * tab;
      }
    }
    Tape t;
    const double got = matching_loss(t.constant(O1), t.constant(O2), anchors, p, 21).scalar();
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
    CHECK(got >= 0.0);
  }
  SUBCASE("negative sampling") {
    const std::vector<AnchorLink> anchors{{0, 0}, {1, 4}, {2, 9}};
    const auto negs = sample_anchor_negatives(anchors, 10, 5, 3);
    REQUIRE(negs.size() == 15);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t k = 0; k < 5; ++k) {
        CHECK(negs[a * 5 + k] != anchors[a].target);
        CHECK(negs[a * 5 + k] < 10);
      }
    }
    CHECK(sample_anchor_negatives(anchors, 10, 5, 3) == negs);
    CHECK_THROWS(sample_anchor_negatives(anchors, 5, 5, 3));
    CHECK_THROWS(sample_anchor_negatives(anchors, 10, 0, 3));

    // roughly uniform over the 9 allowed ids
    std::vector<int> counts(10, 0);
    const std::vector<AnchorLink> many(10000, AnchorLink{0, 4});
    for (NodeId b : sample_anchor_negatives(many, 10, 9, 1)) ++counts[b];
    CHECK(counts[4] == 0);
    for (int b = 0; b < 10; ++b) {
      if (b != 4) CHECK(std::abs(counts[b] - 10000) < 500);
    }
  }
}

TEST_CASE("constraint loss") {
  Tape t;
  SUBCASE("one head with m = [3, 4]") {
    EncoderOutput out;
    out.classes = {DegreeClass::Head};
    PredictionCache c;
    c.missing = t.constant((Matrix(1, 2) << 3, 4).finished());
    out.caches.push_back(c);
    CHECK(constraint_loss(t, out).scalar() == 25.0);
  }
  SUBCASE("zero predictions give zero") {
    EncoderOutput out;
    out.classes = {DegreeClass::Head, DegreeClass::Tail, DegreeClass::SuperHead};
    PredictionCache c;
    c.missing = t.constant(Matrix::Zero(3, 4));
    c.redundant = t.constant(Matrix::Zero(3, 4));
    out.caches.assign(4, c);
    CHECK(constraint_loss(t, out).scalar() == 0.0);
  }
  SUBCASE("mixed partition matches a brute-force double sum") {
    std::mt19937_64 rng(3);
    EncoderOutput out;
    out.classes = {DegreeClass::Tail, DegreeClass::Head, DegreeClass::SuperHead, DegreeClass::Tail,
                   DegreeClass::Head};
    std::vector<Matrix> ms;
    std::vector<Matrix> rs;
    for (int layer = 0; layer < 4; ++layer) {
      ms.push_back(random_matrix(5, 3, rng));
      rs.push_back(random_matrix(5, 3, rng));
      PredictionCache c;
      c.missing = t.constant(ms.back());
      // the no_NR shape: one cache without redundancy predictions
      if (layer != 2) c.redundant = t.constant(rs.back());
      out.caches.push_back(c);
    }
    double want = 0.0;
    for (int layer = 0; layer < 4; ++layer) {
      for (Index i = 0; i < 5; ++i) {
        if (out.classes[i] != DegreeClass::Tail) want += ms[layer].row(i).squaredNorm();
        if (layer != 2 && out.classes[i] != DegreeClass::SuperHead) {
          want += rs[layer].row(i).squaredNorm();
        }
      }
    }
    CHECK(constraint_loss(t, out).scalar() == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("total loss") {
  CHECK(total_loss(1, 2, 3, 4, 6, 0.5, 0.1) == doctest::Approx(4.5));
  Tape t;
  auto c = [&](double v) { return t.constant(Matrix::Constant(1, 1, v)); };
  CHECK(total_loss(c(1), c(2), c(3), c(4), c(6), 0.5, 0.1).scalar() == doctest::Approx(4.5));
}

TEST_CASE("anchor sets") {
  AnchorSet s{{{0, 1}, {2, 3}}, AnchorRole::Train};
  CHECK_NOTHROW(s.validate(3, 4));
  CHECK_THROWS_AS(s.validate(2, 4), std::out_of_range);
  CHECK_THROWS_AS(s.validate(3, 3), std::out_of_range);
  s.pairs.push_back({0, 0});
  CHECK_THROWS_AS(s.validate(3, 4), std::invalid_argument);
}

TEST_CASE("mapping nets and loss gradients") {
  MappingNets maps = MappingNets::init(4, 3, 1);
  CHECK(maps.source.first.out_dim() == 8);
  CHECK(maps.source.out_dim() == 3);
  CHECK(maps.source.first.weight.value != maps.target.first.weight.value);
  CHECK(MappingNets::init(256, 256, 0).source.out_dim() == 256);

  std::mt19937_64 rng(2);
  nn::Parameter Z1("Z1", random_matrix(6, 4, rng));
  nn::Parameter Z2("Z2", random_matrix(7, 4, rng));
  std::vector<nn::Parameter*> ps{&Z1, &Z2};
  maps.collect(ps);
  const std::vector<AnchorLink> anchors{{0, 3}, {2, 1}, {5, 6}};
  const std::vector<SampledPair> s1{{0, 1, 1.0, true}, {2, 3, 1.0, true}, {1, 4, 0.0, false}};

  auto r = check_gradients(ps, [&](Tape& t) {
    Var z1 = t.parameter(Z1);
    Var z2 = t.parameter(Z2);
    Var o1 = maps.source.forward(t, z1);
    Var o2 = maps.target.forward(t, z2);
    return nn::add(matching_loss(o1, o2, anchors, 2, 4), nn::scale(topology_loss(z1, s1), 0.3));
  });
  INFO("worst at " << r.where);
  CHECK(r.worst < 1e-5);

  auto m = check_gradients(ps, [&](Tape& t) { return contract(t, maps.target.forward(t, t.parameter(Z2))); });
  CHECK(m.worst < 1e-5);
}

TEST_CASE("metrics report") {
  const std::vector<std::size_t> ranks{1, 3, 1, 50, 2};
  const std::vector<std::size_t> degs{0, 2, 3, 500, 7};
  const MetricsReport rep = summarize_ranks(ranks, degs, default_degree_buckets());
  CHECK(rep.num_test == 5);
  CHECK(rep.hits_at(1) == doctest::Approx(0.4));
  std::size_t total = 0;
  for (const BucketMetric& b : rep.per_bucket_mrr) total += b.count;
  CHECK(total == 5);
  CHECK(rep.per_bucket_mrr[0].count == 2);
  CHECK(rep.per_bucket_mrr[0].mrr == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
  CHECK(rep.per_bucket_mrr[5].mrr == doctest::Approx(0.02));
  const auto j = rep.to_json();
  CHECK(j["per_bucket_mrr"][0]["interval"] == "(0,2]");
  CHECK(j["per_bucket_mrr"][5]["upper"].is_null());
  CHECK(j["hits"]["30"].get<double>() <= 1.0);

  std::vector<DegreeBucket> gap{{0, 2}, {3, std::numeric_limits<std::size_t>::max()}};
  CHECK_THROWS(summarize_ranks(ranks, degs, gap));
  CHECK_THROWS(summarize_ranks(ranks, std::vector<std::size_t>{1}, default_degree_buckets()));
}
