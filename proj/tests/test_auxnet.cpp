#include <doctest.h>

#include <cmath>
#include <random>

#include "crossfuse/auxnet.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/fusion.hpp"
#include "crossfuse/gradcheck.hpp"

using namespace crossfuse;

namespace {

MatrixXr random_matrix(Index r, Index c, std::uint64_t seed, Real lo = -1, Real hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> U(lo, hi);
  MatrixXr M(r, c);
  for (Index k = 0; k < M.size(); ++k) M(k) = U(rng);
  return M;
}

SparseXr random_similarity(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> U(0.1, 1);
  std::bernoulli_distribution on(0.2);
  MatrixXr D = MatrixXr::Identity(n, n);
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v)
      if (on(rng)) D(u, v) = D(v, u) = U(rng);
  SparseXr S = D.sparseView();
  S.makeCompressed();
  return S;
}

}  // namespace

TEST_CASE("encoder without hidden layers is one affine map") {
  AuxNetConfig cfg;
  cfg.hidden = {};
  cfg.dim = 3;
  AuxEncoder enc(4, cfg);
  std::mt19937_64 rng(1);
  enc.init(rng);
  const MatrixXr X = random_matrix(5, 4, 2);
  MatrixXr want = X * enc.projection.weight.transpose();
  want.rowwise() += enc.projection.bias;
  CHECK(enc.forward(X, Mode::Train) == want);
}

TEST_CASE("zero weights collapse the encoder to the final bias") {
  AuxNetConfig cfg;
  cfg.hidden = {6, 5};
  cfg.dim = 3;
  AuxEncoder enc(4, cfg);
  std::mt19937_64 rng(1);
  enc.init(rng);
  for (auto& b : enc.blocks) b.affine.weight.setZero();
  enc.projection.weight.setZero();
  enc.projection.bias << 0.5, -1, 2;
  const MatrixXr Y = enc.forward(random_matrix(7, 4, 3), Mode::Eval);
  for (Index r = 0; r < Y.rows(); ++r) CHECK(Y.row(r) == enc.projection.bias);
}

TEST_CASE("batch norm eval equals train when running stats equal batch stats") {
  BatchNorm bn(4);
  bn.gamma = random_matrix(1, 4, 4, 0.5, 2);
  bn.beta = random_matrix(1, 4, 5);
  const MatrixXr X = random_matrix(9, 4, 6, -3, 3);
  const MatrixXr train = bn.forward(X, Mode::Train);
  bn.running_mean = X.colwise().mean();
  bn.running_var = (X.rowwise() - bn.running_mean).colwise().squaredNorm() / 9.0;
  const MatrixXr eval = bn.forward(X, Mode::Eval);
  CHECK((train - eval).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("batch norm running statistics use momentum and unbiased variance") {
  BatchNorm bn(1, 0.1, 1e-5);
  MatrixXr X(2, 1);
  X << 1, 3;
  bn.forward(X, Mode::Train);
  CHECK(bn.running_mean(0) == doctest::Approx(0.9 * 0 + 0.1 * 2));
  CHECK(bn.running_var(0) == doctest::Approx(0.9 * 1 + 0.1 * 2));
  CHECK_THROWS_AS(bn.forward(MatrixXr::Ones(1, 1), Mode::Train), DataError);
}

TEST_CASE("gcn stack matches a dense aggregation oracle") {
  const Index n = 15, d = 4;
  const SparseXr S = random_similarity(n, 9);
  AuxGcnStack stack(2, d);
  std::mt19937_64 rng(3);
  stack.init(rng);
  for (auto& b : stack.blocks) {
    b.norm.running_mean = random_matrix(1, d, 10);
    b.norm.running_var = random_matrix(1, d, 11, 0.5, 2);
  }
  const MatrixXr A0 = random_matrix(n, d, 12);
  const MatrixXr got = stack.forward(S, A0, Mode::Eval);

  const MatrixXr Sd(S);
  MatrixXr want = A0;
  for (const auto& b : stack.blocks) {
    MatrixXr z = Sd * want * b.affine.weight.transpose();
    z.rowwise() += b.affine.bias;
    z = (z.rowwise() - b.norm.running_mean).array().rowwise() /
        (b.norm.running_var.array() + b.norm.eps).sqrt();
    z = z.array().rowwise() * b.norm.gamma.array();
    z.rowwise() += b.norm.beta;
    want = z.cwiseMax(0.0);
  }
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("gcn aggregation by hand with an identity block") {
  SparseXr S(3, 3);
  S.insert(0, 0) = 1;
  S.insert(0, 1) = 0.4;
  S.insert(1, 0) = 0.4;
  S.insert(1, 1) = 1;
  S.insert(2, 2) = 1;
  S.makeCompressed();
  AuxGcnStack stack(1, 2);
  auto& b = stack.blocks[0];
  b.affine.weight.setIdentity();
  b.affine.bias.setZero();
  b.norm.running_mean.setZero();
  b.norm.running_var.setConstant(1 - b.norm.eps);
  MatrixXr A0(3, 2);
  A0 << 1, 2, 3, 4, 5, 6;
  const MatrixXr A = stack.forward(S, A0, Mode::Eval);
  CHECK(A(0, 0) == doctest::Approx(1 + 0.4 * 3).epsilon(1e-14));
  CHECK(A(0, 1) == doctest::Approx(2 + 0.4 * 4).epsilon(1e-14));
  CHECK(A(2, 0) == doctest::Approx(5).epsilon(1e-14));  // self loop only
  CHECK(A(2, 1) == doctest::Approx(6).epsilon(1e-14));
}

TEST_CASE("stage-1 squared error by hand") {
  Features A(1, 1, 2);
  A.user(0) << 1, 2;
  A.item(0) << 3, -1;
  std::vector<Rated> one{{0, 0, 0.0}};
  CHECK(dot_mse_loss<Real>(A, one) == 1.0);

  Features dA(1, 1, 2);
  std::vector<Rated> exact{{0, 0, 1.0}};
  CHECK(dot_mse_loss<Real>(A, exact, &dA) == 0.0);
  CHECK(dA.nodes.isZero());
}

TEST_CASE("stage-1 gradients through both towers match central differences") {
  AuxNetConfig cfg;
  cfg.hidden = {5};
  cfg.dim = 3;
  cfg.gcn_layers = 1;
  auto su = std::make_shared<const SparseXr>(random_similarity(6, 1));
  auto si = std::make_shared<const SparseXr>(random_similarity(6, 2));
  AuxModel model(AuxTower(random_matrix(6, 4, 3, 0, 1), su, cfg),
                 AuxTower(random_matrix(6, 3, 4, 0, 1), si, cfg));
  model.init(8);
  std::vector<Rated> batch{{0, 1, 1}, {1, 1, 0}, {2, 3, 1}, {4, 5, 1}, {5, 0, 0}, {3, 2, 1}};
  model.zero_grad();
  model.stage1_loss_and_grad(batch);
  const auto params = model.params();
  for (const auto& p : params) {
    const VectorXr analytic =
        Eigen::Map<const VectorXr>(p.grad.data(), static_cast<Index>(p.grad.size()));
    const VectorXr numeric = numeric_gradient(
        [&] {
          const Features A = model.forward(Mode::Train);
          return dot_mse_loss<Real>(A, batch);
        },
        p.value, 1e-6);
    CHECK_MESSAGE(gradient_error(analytic, numeric, 1e-6) <= 1e-5, p.name);
  }
  std::vector<Rated> none;
  CHECK_THROWS_AS(model.stage1_loss_and_grad(none), DataError);
}
