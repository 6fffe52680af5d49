#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "deglink/checkpoint.hpp"
#include "deglink/layers.hpp"
#include "deglink/numerics.hpp"
#include "gradcheck.hpp"

using namespace deglink;
using namespace deglink::nn;
using deglink::testing::check_gradients;
using deglink::testing::contract;
using deglink::testing::random_matrix;

namespace {

constexpr double kGradTol = 1e-4;

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

EdgeIndexPtr small_index() {
  // 3 output rows over 5 input rows; row 1 has a single edge.
  auto idx = std::make_shared<EdgeIndex>();
  idx->in_rows = 5;
  for (std::size_t s : {0, 2, 4}) idx->push(s);
  idx->close_row();
  idx->push(3);
  idx->close_row();
  for (std::size_t s : {1, 2, 3, 4}) idx->push(s);
  idx->close_row();
  return idx;
}

}  // namespace

TEST_CASE("forward values of the basic ops") {
  Tape t;
  Matrix a = mat({{1, 2}, {3, 4}, {5, 6}});
  Var I = t.constant(Matrix::Identity(3, 3));
  Var A = t.constant(a);
  CHECK(matmul(I, A).value() == a);
  CHECK(mean_rows(t.constant(mat({{1, 3}, {3, 5}}))).value() == mat({{2, 4}}));
  Var u = t.constant(mat({{1, 0}}));
  Var v = t.constant(mat({{0, 1}}));
  CHECK(cosine_rows(u, v).value()(0, 0) == 0.0);
  CHECK(cosine_rows(u, u).value()(0, 0) == doctest::Approx(1.0));
  CHECK(cosine_rows(t.constant(Matrix::Zero(1, 2)), u).value()(0, 0) == 0.0);
  CHECK(sum_squares(t.constant(mat({{3, 4}}))).scalar() == 25.0);
  CHECK(concat_cols(u, v).value() == mat({{1, 0, 0, 1}}));
  CHECK(concat_rows(u, v).value() == mat({{1, 0}, {0, 1}}));
  CHECK(mul(A, t.constant(mat({{2, 3}}))).value() == mat({{2, 6}, {6, 12}, {10, 18}}));
  CHECK(leaky_relu(t.constant(mat({{-1, 2}})), 0.2).value() == mat({{-0.2, 2}}));
  CHECK(gather_rows(A, {2, 0, 2}).value() == mat({{5, 6}, {1, 2}, {5, 6}}));
  CHECK(row_scale(A, {0, 1, 2}).value() == mat({{0, 0}, {3, 4}, {10, 12}}));
}

TEST_CASE("shape mismatches name both shapes") {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(2, 2));
  try {
    (void)matmul(a, b);
    FAIL("matmul accepted mismatched shapes");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)concat_rows(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)cosine_rows(a, b), std::invalid_argument);
}

TEST_CASE("segment softmax is stable and normalized per row") {
  auto idx = small_index();
  Tape t;
  Var logits = t.constant(mat({{1000}, {1001}, {999}, {-5}, {0}, {1e3}, {2}, {3}}));
  const Matrix p = segment_softmax(idx, logits).value();
  REQUIRE(p.allFinite());
  CHECK(p(0, 0) + p(1, 0) + p(2, 0) == doctest::Approx(1.0));
  CHECK(p(3, 0) == 1.0);
  CHECK(p(4, 0) + p(5, 0) + p(6, 0) + p(7, 0) == doctest::Approx(1.0));
  CHECK(p(1, 0) > p(0, 0));
}

TEST_CASE("backward basics") {
  SUBCASE("squared norm gives 2v") {
    std::mt19937_64 rng(3);
    Parameter v("v", random_matrix(1, 6, rng));
    Tape t;
    Var loss = sum_squares(t.parameter(v));
    t.backward(loss);
    CHECK((v.grad - 2.0 * v.value).norm() == 0.0);
  }
  SUBCASE("constant loss leaves gradients zero") {
    Parameter w("w", Matrix::Ones(2, 2));
    Tape t;
    (void)t.parameter(w);
    Var loss = sum(t.constant(Matrix::Ones(3, 1)));
    t.backward(loss);
    CHECK(w.grad.isZero(0.0));
  }
  SUBCASE("second backward on a consumed tape throws") {
    Parameter w("w", Matrix::Ones(2, 2));
    Tape t;
    Var loss = sum(t.parameter(w));
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), std::logic_error);
  }
  SUBCASE("sum(W x) matches finite differences") {
    std::mt19937_64 rng(5);
    Parameter W("W", random_matrix(4, 3, rng));
    const Matrix x = random_matrix(3, 1, rng);
    auto r = check_gradients({&W}, [&](Tape& t) { return sum(matmul(t.parameter(W), t.constant(x))); });
    CHECK(r.worst < kGradTol);
    // analytic: every row of dL/dW is x^T
    for (Index i = 0; i < 4; ++i) CHECK((W.grad.row(i) - x.transpose()).norm() < 1e-15);
  }
}

TEST_CASE("finite-difference gradients of every op") {
  std::mt19937_64 rng(11);
  Parameter a("a", random_matrix(4, 3, rng));
  Parameter b("b", random_matrix(4, 3, rng));
  Parameter c("c", random_matrix(3, 5, rng));
  Parameter row("row", random_matrix(1, 3, rng));
  std::vector<Parameter*> ab{&a, &b};

  auto check = [&](const char* name, std::vector<Parameter*> ps, testing::LossBuilder f) {
    const auto r = check_gradients(ps, f);
    INFO(name << " worst at " << r.where);
    CHECK(r.worst < kGradTol);
  };

  check("matmul", {&a, &c}, [&](Tape& t) {
    return contract(t, matmul(t.parameter(a), t.parameter(c)));
  });
  check("add", ab, [&](Tape& t) { return contract(t, add(t.parameter(a), t.parameter(b))); });
  check("sub", ab, [&](Tape& t) { return contract(t, sub(t.parameter(a), t.parameter(b))); });
  check("mul", ab, [&](Tape& t) { return contract(t, mul(t.parameter(a), t.parameter(b))); });
  check("add broadcast", {&a, &row},
        [&](Tape& t) { return contract(t, add(t.parameter(a), t.parameter(row))); });
  check("mul broadcast", {&a, &row},
        [&](Tape& t) { return contract(t, mul(t.parameter(a), t.parameter(row))); });
  check("scale", {&a}, [&](Tape& t) { return contract(t, scale(t.parameter(a), -1.7)); });
  check("concat_cols", ab,
        [&](Tape& t) { return contract(t, concat_cols(t.parameter(a), t.parameter(b))); });
  check("concat_rows", ab,
        [&](Tape& t) { return contract(t, concat_rows(t.parameter(a), t.parameter(b))); });
  check("mean_rows", {&a}, [&](Tape& t) { return contract(t, mean_rows(t.parameter(a))); });
  check("leaky_relu", {&a},
        [&](Tape& t) { return contract(t, leaky_relu(t.parameter(a), 0.2)); });
  check("tanh", {&a}, [&](Tape& t) { return contract(t, nn::tanh(t.parameter(a))); });
  check("gather_rows", {&a},
        [&](Tape& t) { return contract(t, gather_rows(t.parameter(a), {3, 0, 3, 1, 3})); });
  check("row_scale", {&a},
        [&](Tape& t) { return contract(t, row_scale(t.parameter(a), {0.5, -2, 0, 1})); });
  check("cosine_rows", ab,
        [&](Tape& t) { return contract(t, cosine_rows(t.parameter(a), t.parameter(b))); });
  check("sum_squares", {&a}, [&](Tape& t) { return sum_squares(t.parameter(a)); });
  check("sum", {&a}, [&](Tape& t) { return sum(mul(t.parameter(a), t.parameter(a))); });

  auto idx = small_index();
  Parameter values("values", random_matrix(5, 3, rng));
  Parameter weights("weights", random_matrix(8, 1, rng));
  Parameter rs("row_scores", random_matrix(3, 1, rng));
  Parameter ss("source_scores", random_matrix(5, 1, rng));
  check("edge_aggregate", {&values, &weights}, [&](Tape& t) {
    return contract(t, edge_aggregate(idx, t.parameter(weights), t.parameter(values)));
  });
  check("edge_aggregate constant weights", {&values}, [&](Tape& t) {
    return contract(t, edge_aggregate(idx, t.constant(weights.value), t.parameter(values)));
  });
  check("edge_scores", {&rs, &ss}, [&](Tape& t) {
    return contract(t, edge_scores(idx, t.parameter(rs), t.parameter(ss)));
  });
  check("segment_softmax", {&weights},
        [&](Tape& t) { return contract(t, segment_softmax(idx, t.parameter(weights))); });
  check("attention composite", {&values, &rs, &ss}, [&](Tape& t) {
    Var logits = leaky_relu(edge_scores(idx, t.parameter(rs), t.parameter(ss)), 0.2);
    return contract(t, edge_aggregate(idx, segment_softmax(idx, logits), t.parameter(values)));
  });
}

TEST_CASE("linear and mlp layers pass the gradient check") {
  std::mt19937_64 rng(21);
  Mlp mlp("mlp", 4, 6, 3, rng);
  std::vector<Parameter*> ps;
  mlp.collect(ps);
  const Matrix x = random_matrix(5, 4, rng);
  const auto r = check_gradients(ps, [&](Tape& t) { return contract(t, mlp.forward(t, t.constant(x))); });
  INFO("worst at " << r.where);
  CHECK(r.worst < kGradTol);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::mt19937_64 rng(1);
    Parameter p("p", random_matrix(3, 2, rng));
    const Matrix before = p.value;
    Adam opt(0.1);
    std::vector<Parameter*> ps{&p};
    for (int i = 0; i < 5; ++i) opt.step(ps);
    CHECK(p.value == before);
  }
  SUBCASE("first step moves a scalar by about lr") {
    Parameter p("p", Matrix::Constant(1, 1, 2.0));
    p.grad(0, 0) = 1.0;
    Adam opt(0.01);
    std::vector<Parameter*> ps{&p};
    opt.step(ps);
    CHECK(p.value(0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-9));
    CHECK(p.grad(0, 0) == 0.0);
  }
  SUBCASE("quadratic bowl against an independent scalar implementation") {
    Parameter p("w", Matrix::Constant(1, 1, 1.0));
    Adam opt(0.1);
    std::vector<Parameter*> ps{&p};
    double w = 1.0;
    double m = 0.0;
    double v = 0.0;
    for (int k = 1; k <= 200; ++k) {
      Tape t;
      Var loss = sum_squares(t.parameter(p));
      t.backward(loss);
      opt.step(ps);
      const double g = 2.0 * w;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      w -= 0.1 * (m / (1.0 - std::pow(0.9, k))) / (std::sqrt(v / (1.0 - std::pow(0.999, k))) + 1e-8);
    }
    CHECK(p.value(0, 0) == doctest::Approx(w).epsilon(1e-12));
    CHECK(std::abs(p.value(0, 0)) < 1e-3);
  }
  SUBCASE("non-finite gradient aborts before any update") {
    Parameter a("a", Matrix::Ones(1, 2));
    Parameter b("b", Matrix::Ones(1, 2));
    a.grad.setConstant(0.5);
    b.grad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    Adam opt(0.1);
    std::vector<Parameter*> ps{&a, &b};
    CHECK_THROWS_AS(opt.step(ps), std::runtime_error);
    CHECK(a.value == Matrix::Ones(1, 2));
    CHECK(opt.steps_taken() == 0);
  }
}

TEST_CASE("tensor archive round-trips bit-exactly") {
  std::mt19937_64 rng(8);
  TensorArchive a;
  a.metadata = "{\"k\": 1}";
  a.tensors.emplace_back("x", random_matrix(3, 4, rng, 1e6));
  Matrix odd(2, 2);
  odd << std::numeric_limits<double>::denorm_min(), -0.0, 1e308, -1.0 / 3.0;
  a.tensors.emplace_back("odd", odd);
  a.tensors.emplace_back("empty", Matrix(0, 3));
  const TensorArchive b = decode_archive(encode_archive(a));
  CHECK(b.metadata == a.metadata);
  REQUIRE(b.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(b.tensors[i].first == a.tensors[i].first);
    const Matrix& x = a.tensors[i].second;
    const Matrix& y = b.tensors[i].second;
    REQUIRE(x.rows() == y.rows());
    REQUIRE(x.cols() == y.cols());
    CHECK(std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0);
  }
  CHECK(std::signbit(b.at("odd")(0, 1)));

  const std::string bytes = encode_archive(a);
  CHECK_THROWS(decode_archive(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(decode_archive("XXXX" + bytes.substr(4)));
  CHECK_THROWS(b.at("missing"));
}
