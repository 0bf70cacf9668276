#include <doctest.h>

#include <random>

#include "crossfuse/graph.hpp"
#include "test_util.hpp"

using namespace crossfuse;

namespace {

SparseXr from_dense(const MatrixXr& D) {
  SparseXr S = D.sparseView();
  S.makeCompressed();
  return S;
}

InteractionDataset edges(Index n, Index m, const std::vector<std::pair<Index, Index>>& e) {
  std::vector<Interaction> recs;
  for (auto [u, i] : e) recs.push_back({u, i, 1.0, {}, Split::Train});
  return InteractionDataset(n, m, recs);
}

}  // namespace

TEST_CASE("hand-computed cosine and threshold") {
  MatrixXr R(2, 3);
  R << 1, 1, 0, 0, 1, 1;
  const auto S = build_similarity_graph<Real>(from_dense(R), Axis::Rows, 0.3);
  CHECK(S.coeff(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(S.coeff(1, 0) == S.coeff(0, 1));
  CHECK(S.coeff(0, 0) == 1.0);
  const auto T = build_similarity_graph<Real>(from_dense(R), Axis::Rows, 0.6);
  CHECK(T.nonZeros() == 2);
  CHECK(T.coeff(0, 1) == 0.0);
}

TEST_CASE("disjoint supports never connect") {
  MatrixXr R(2, 4);
  R << 1, 1, 0, 0, 0, 0, 1, 1;
  for (Real eps : {1e-9, 0.1, 0.5}) {
    const auto S = build_similarity_graph<Real>(from_dense(R), Axis::Rows, eps);
    CHECK(S.coeff(0, 1) == 0.0);
    CHECK(csr_invariants_hold(S));
  }
}

TEST_CASE("inactive node gets only a self loop and is reported") {
  MatrixXr R(3, 2);
  R << 1, 1, 0, 0, 1, 0;
  GraphReport rep;
  const auto S = build_similarity_graph<Real>(from_dense(R), Axis::Rows, 0.1, {}, &rep);
  REQUIRE(rep.isolated.size() == 1);
  CHECK(rep.isolated[0] == 1);
  CHECK(S.row(1).nonZeros() == 1);
  CHECK(S.coeff(1, 1) == 1.0);
}

TEST_CASE("similarity matches a dense cosine oracle on random data") {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution on(0.25);
  MatrixXr R = MatrixXr::Zero(15, 20);
  for (Index r = 0; r < 15; ++r)
    for (Index c = 0; c < 20; ++c)
      if (on(rng)) R(r, c) = 1 + static_cast<Real>(c % 3);  // ratings are binarized
  const Real eps = 0.2;
  for (Axis axis : {Axis::Rows, Axis::Columns}) {
    const MatrixXr B = (axis == Axis::Rows ? R : MatrixXr(R.transpose())).unaryExpr(
        [](Real v) { return v > 0 ? 1.0 : 0.0; });
    const auto S = build_similarity_graph<Real>(from_dense(R), axis, eps);
    CHECK(csr_invariants_hold(S));
    const MatrixXr D(S);
    for (Index u = 0; u < B.rows(); ++u)
      for (Index v = 0; v < B.rows(); ++v) {
        const Real nu = B.row(u).norm(), nv = B.row(v).norm();
        Real want = 0;
        if (u == v) {
          want = 1;
        } else if (nu > 0 && nv > 0) {
          const Real c = B.row(u).dot(B.row(v)) / (nu * nv);
          want = c >= eps ? c : 0;
        }
        CHECK(D(u, v) == doctest::Approx(want).epsilon(1e-12));
      }
  }
}

TEST_CASE("bipartite normalization weights") {
  const auto one = normalize_bipartite<Real>(edges(1, 1, {{0, 0}}));
  CHECK(one.coeff(0, 1) == 1.0);
  CHECK(one.coeff(1, 0) == 1.0);
  CHECK(one.coeff(0, 0) == 0.0);

  const auto star = normalize_bipartite<Real>(edges(1, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}}));
  for (Index i = 0; i < 4; ++i) CHECK(star.coeff(0, 1 + i) == 0.5);

  GraphReport rep;
  const auto iso = normalize_bipartite<Real>(edges(2, 3, {{0, 0}, {1, 0}, {1, 1}}), &rep);
  CHECK(iso.row(2 + 2).nonZeros() == 0);
  CHECK(csr_invariants_hold(iso));
  CHECK(std::find(rep.isolated.begin(), rep.isolated.end(), 4) != rep.isolated.end());
  const MatrixXr D(iso);
  CHECK(D.allFinite());
  CHECK((D - D.transpose()).norm() == 0.0);
}

TEST_CASE("propagate is a sparse-dense product") {
  SparseXr A(2, 2);
  A.insert(0, 1) = 0.25;
  A.makeCompressed();
  MatrixXr X = MatrixXr::Zero(2, 3);
  CHECK(propagate(A, X).isZero());
  X(1, 2) = 1;
  const MatrixXr Y = propagate(A, X);
  CHECK(Y(0, 2) == 0.25);
  CHECK(Y.sum() == 0.25);
  CHECK_THROWS_AS(propagate(A, MatrixXr::Zero(3, 1)), DimensionError);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<Real> U(-1, 1);
  std::bernoulli_distribution on(0.3);
  MatrixXr Ad = MatrixXr::Zero(12, 9);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < 9; ++c)
      if (on(rng)) Ad(r, c) = U(rng);
  MatrixXr P(9, 5), Q(9, 5);
  for (Index k = 0; k < P.size(); ++k) {
    P(k) = U(rng);
    Q(k) = U(rng);
  }
  const SparseXr As = from_dense(Ad);
  CHECK((propagate(As, P) - Ad * P).cwiseAbs().maxCoeff() <= 1e-12);
  const Real a = 0.7, b = -1.3;
  const MatrixXr lhs = propagate(As, MatrixXr(a * P + b * Q));
  const MatrixXr rhs = a * propagate(As, P) + b * propagate(As, Q);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sparse file round trip") {
  testutil::TempDir dir("graph");
  MatrixXr D(3, 3);
  D << 1, 0, 0.5, 0, 1, 0, 0.5, 0, 1;
  const auto S = from_dense(D);
  save_sparse(dir.file("s.csr"), S);
  const auto back = load_sparse(dir.file("s.csr"));
  CHECK(MatrixXr(back) == D);
  auto bytes = testutil::read_file(dir.file("s.csr"));
  bytes.resize(bytes.size() - 5);
  testutil::write_file(dir.file("t.csr"), bytes);
  CHECK_THROWS(load_sparse(dir.file("t.csr")));
}
