#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/graph.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse {

/// Dense per-node vectors with a gradient buffer of the same shape.
template <typename Scalar = Real>
struct EmbeddingTable {
  Matrix<Scalar> values;
  Matrix<Scalar> grad;

  EmbeddingTable() = default;
  explicit EmbeddingTable(Matrix<Scalar> v)
      : values(std::move(v)), grad(Matrix<Scalar>::Zero(values.rows(), values.cols())) {}

  Index count() const { return values.rows(); }
  Index dim() const { return values.cols(); }
  void zero_grad() { grad.setZero(values.rows(), values.cols()); }
};

/// N(0, 0.01^2) entries drawn row by row from a 64-bit Mersenne stream.
inline EmbeddingTable<Real> init_embeddings(Index count, Index dim, std::uint64_t seed,
                                            Real stddev = 0.01) {
  if (count < 1 || dim < 1) throw ConfigError("embedding table needs count, dim >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> normal(0.0, stddev);
  MatrixXr v(count, dim);
  for (Index r = 0; r < count; ++r)
    for (Index c = 0; c < dim; ++c) v(r, c) = normal(rng);
  return EmbeddingTable<Real>(std::move(v));
}

struct BackboneConfig {
  Index layers = 3;
  /// Layer weights alpha_0..alpha_K; empty means uniform 1 / (K + 1).
  std::vector<Real> alphas;
  Real lambda_reg = 1e-4;
  Index dim = 64;

  std::vector<Real> layer_weights() const {
    if (alphas.empty())
      return std::vector<Real>(static_cast<std::size_t>(layers + 1),
                               1.0 / static_cast<Real>(layers + 1));
    return alphas;
  }

  void validate() const {
    if (layers < 0) throw ConfigError("backbone.layers must be >= 0");
    if (!alphas.empty() && static_cast<Index>(alphas.size()) != layers + 1)
      throw ConfigError("backbone.alphas must have layers + 1 entries");
    if (!(lambda_reg >= 0)) throw ConfigError("backbone.lambda_reg must be >= 0");
    if (dim < 1) throw ConfigError("backbone.dim must be >= 1");
  }
};

/// Propagation rule over the bipartite graph. Implementations map layer-0
/// node embeddings to output features and pull output gradients back to
/// layer 0.
template <typename Scalar>
class GraphBackbone {
 public:
  virtual ~GraphBackbone() = default;
  virtual NodeFeatures<Scalar> forward(const Matrix<Scalar>& E0) = 0;
  virtual Matrix<Scalar> backward(const Matrix<Scalar>& grad_output) const = 0;
};

/// Parameter-free propagation E(k) = A E(k-1), output sum_k alpha_k E(k).
template <typename Scalar = Real>
class LightGcn final : public GraphBackbone<Scalar> {
 public:
  LightGcn(std::shared_ptr<const SparseMatrix<Scalar>> adjacency, Index n_users,
           std::vector<Scalar> alphas)
      : adj_(std::move(adjacency)), n_users_(n_users), alphas_(std::move(alphas)) {
    if (!adj_ || adj_->rows() != adj_->cols())
      throw DimensionError("LightGcn needs a square adjacency");
    if (alphas_.empty()) throw ConfigError("LightGcn needs at least one layer weight");
  }

  Index layers() const { return static_cast<Index>(alphas_.size()) - 1; }
  const std::vector<Scalar>& alphas() const { return alphas_; }
  const SparseMatrix<Scalar>& adjacency() const { return *adj_; }

  NodeFeatures<Scalar> forward(const Matrix<Scalar>& E0) override {
    if (E0.rows() != adj_->rows())
      throw DimensionError("LightGcn: embeddings have " + std::to_string(E0.rows()) +
                           " rows, graph has " + std::to_string(adj_->rows()) + " nodes");
    activations_.resize(alphas_.size());
    activations_[0] = E0;
    Matrix<Scalar> out = alphas_[0] * E0;
    for (std::size_t k = 1; k < alphas_.size(); ++k) {
      activations_[k] = propagate(*adj_, activations_[k - 1]);
      out.noalias() += alphas_[k] * activations_[k];
    }
    return NodeFeatures<Scalar>(std::move(out), n_users_);
  }

  /// sum_k alpha_k (A^T)^k G, evaluated Horner style.
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_output) const override {
    const auto K = alphas_.size() - 1;
    Matrix<Scalar> acc = alphas_[K] * grad_output;
    for (std::size_t k = K; k-- > 0;) {
      acc = propagate_transpose(*adj_, acc);
      acc.noalias() += alphas_[k] * grad_output;
    }
    return acc;
  }

  /// Per-layer activations E(0)..E(K) of the last forward pass.
  const std::vector<Matrix<Scalar>>& activations() const { return activations_; }

 private:
  std::shared_ptr<const SparseMatrix<Scalar>> adj_;
  Index n_users_;
  std::vector<Scalar> alphas_;
  std::vector<Matrix<Scalar>> activations_;
};

/// -ln sigmoid(x), stable for large |x|.
template <typename Scalar>
Scalar neg_log_sigmoid(Scalar x) {
  return x >= Scalar(0) ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// Pairwise ranking loss -sum ln sigmoid(p_u.q_pos - p_u.q_neg) over user
/// vectors P and item vectors Q. Gradients accumulate into dP, dQ.
template <typename Scalar>
Scalar bpr_feature_loss(const Matrix<Scalar>& P, const Matrix<Scalar>& Q,
                        std::span<const BprTriple> batch, Matrix<Scalar>* dP,
                        Matrix<Scalar>* dQ) {
  Scalar loss = 0;
  for (const auto& t : batch) {
    const auto pu = P.row(t.user);
    const auto qp = Q.row(t.positive);
    const auto qn = Q.row(t.negative);
    const Scalar x = pu.dot(qp) - pu.dot(qn);
    loss += neg_log_sigmoid(x);
    if (dP && dQ) {
      const Scalar c = -sigmoid(-x);  // d(-ln sigmoid(x))/dx
      dP->row(t.user) += c * (qp - qn);
      dQ->row(t.positive) += c * pu;
      dQ->row(t.negative) -= c * pu;
    }
  }
  return loss;
}

template <typename Scalar = Real>
struct BprLoss {
  Scalar ranking = 0;
  Scalar regularizer = 0;
  Scalar total() const { return ranking + regularizer; }
};

/// Adds lambda ||E0||_F^2 and its gradient.
template <typename Scalar>
Scalar add_l2_regularizer(EmbeddingTable<Scalar>& E0, Scalar lambda) {
  if (lambda == Scalar(0)) return Scalar(0);
  E0.grad.noalias() += (Scalar(2) * lambda) * E0.values;
  return lambda * E0.values.squaredNorm();
}

/// BPR objective of the backbone output with the layer-0 regularizer.
/// Gradients are pulled back through propagation into E0.grad.
template <typename Scalar>
BprLoss<Scalar> bpr_loss_and_grad(LightGcn<Scalar>& model, EmbeddingTable<Scalar>& E0,
                                  std::span<const BprTriple> batch, Scalar lambda_reg) {
  if (batch.empty()) throw DataError("bpr_loss_and_grad: empty batch");
  const auto G = model.forward(E0.values);
  const Matrix<Scalar> P = G.users();
  const Matrix<Scalar> Q = G.items();
  Matrix<Scalar> dP = Matrix<Scalar>::Zero(P.rows(), P.cols());
  Matrix<Scalar> dQ = Matrix<Scalar>::Zero(Q.rows(), Q.cols());
  BprLoss<Scalar> loss;
  loss.ranking = bpr_feature_loss(P, Q, batch, &dP, &dQ);
  Matrix<Scalar> dG(G.nodes.rows(), G.nodes.cols());
  dG.topRows(P.rows()) = dP;
  dG.bottomRows(Q.rows()) = dQ;
  E0.grad.noalias() += model.backward(dG);
  loss.regularizer = add_l2_regularizer(E0, lambda_reg);
  return loss;
}

}  // namespace crossfuse
