#pragma once

// Closed-form updating directions of the squared-error objectives, written
// per node as sums over its neighbourhood in the batch. They share no code
// with the backward passes in fusion.hpp and auxnet.cpp, which makes them an
// independent check on those passes.

#include <span>
#include <vector>

#include "crossfuse/fusion.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse::analytic {

struct Neighbourhoods {
  struct Edge {
    Index other = 0;
    Real rating = 0;
  };
  std::vector<std::vector<Edge>> of_user;  ///< N(u): (j, r)
  std::vector<std::vector<Edge>> of_item;  ///< N(i): (v, r)

  Neighbourhoods(Index n_users, Index n_items, std::span<const Rated> batch)
      : of_user(static_cast<std::size_t>(n_users)), of_item(static_cast<std::size_t>(n_items)) {
    for (const auto& t : batch) {
      of_user[static_cast<std::size_t>(t.user)].push_back({t.item, t.rating});
      of_item[static_cast<std::size_t>(t.item)].push_back({t.user, t.rating});
    }
  }
};

/// dL/dx_u = sum_j 2(x_u.x_j - r) x_j and dL/dx_i = sum_v 2(x_v.x_i - r) x_v
/// for a plain squared-error dot-product loss on X.
template <typename Scalar>
Matrix<Scalar> dot_mse_direction(const NodeFeatures<Scalar>& X, std::span<const Rated> batch) {
  const Neighbourhoods nb(X.n_users, X.n_items(), batch);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(X.nodes.rows(), X.dim());
  for (Index u = 0; u < X.n_users; ++u)
    for (const auto& [j, r] : nb.of_user[static_cast<std::size_t>(u)]) {
      const Scalar w = 2 * (X.user(u).dot(X.item(j)) - r);
      out.row(u) += w * X.item(j);
    }
  for (Index i = 0; i < X.n_items(); ++i)
    for (const auto& [v, r] : nb.of_item[static_cast<std::size_t>(i)]) {
      const Scalar w = 2 * (X.user(v).dot(X.item(i)) - r);
      out.row(X.n_users + i) += w * X.user(v);
    }
  return out;
}

/// Stage-1 direction on the auxiliary outputs (weights w^{a1}, w^{a2}).
template <typename Scalar>
Matrix<Scalar> aux_direction(const NodeFeatures<Scalar>& A, std::span<const Rated> batch) {
  return dot_mse_direction(A, batch);
}

/// Squared-error graph loss direction (weights w^{g1}, w^{g2}).
template <typename Scalar>
Matrix<Scalar> graph_direction(const NodeFeatures<Scalar>& G, std::span<const Rated> batch) {
  return dot_mse_direction(G, batch);
}

/// Fused squared-error direction:
/// sum_j (w^{g1}_{uj} g_j + w^{c1}_{uj} a_j) with w^{c1} = 2 l1 (g_u.a_j - a_u.a_j),
/// sum_v (w^{g2}_{vi} g_v + w^{c2}_{vi} a_v) with w^{c2} = 2 l2 (a_v.g_i - a_v.a_i).
template <typename Scalar>
Matrix<Scalar> fused_direction(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                               std::span<const Rated> batch, Scalar lambda1, Scalar lambda2) {
  const Neighbourhoods nb(G.n_users, G.n_items(), batch);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(G.nodes.rows(), G.dim());
  for (Index u = 0; u < G.n_users; ++u)
    for (const auto& [j, r] : nb.of_user[static_cast<std::size_t>(u)]) {
      const Scalar wg = 2 * (G.user(u).dot(G.item(j)) - r);
      const Scalar wc = 2 * lambda1 * (G.user(u).dot(A.item(j)) - A.user(u).dot(A.item(j)));
      out.row(u) += wg * G.item(j) + wc * A.item(j);
    }
  for (Index i = 0; i < G.n_items(); ++i)
    for (const auto& [v, r] : nb.of_item[static_cast<std::size_t>(i)]) {
      const Scalar wg = 2 * (G.user(v).dot(G.item(i)) - r);
      const Scalar wc = 2 * lambda2 * (A.user(v).dot(G.item(i)) - A.user(v).dot(A.item(i)));
      out.row(G.n_users + i) += wg * G.user(v) + wc * A.user(v);
    }
  return out;
}

/// Concatenation direction: sum_j 2(a_u.a_j + g_u.g_j - r) g_j (items alike).
template <typename Scalar>
Matrix<Scalar> concat_direction(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                                std::span<const Rated> batch) {
  const Neighbourhoods nb(G.n_users, G.n_items(), batch);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(G.nodes.rows(), G.dim());
  for (Index u = 0; u < G.n_users; ++u)
    for (const auto& [j, r] : nb.of_user[static_cast<std::size_t>(u)])
      out.row(u) += 2 * (A.user(u).dot(A.item(j)) + G.user(u).dot(G.item(j)) - r) * G.item(j);
  for (Index i = 0; i < G.n_items(); ++i)
    for (const auto& [v, r] : nb.of_item[static_cast<std::size_t>(i)])
      out.row(G.n_users + i) +=
          2 * (A.user(v).dot(A.item(i)) + G.user(v).dot(G.item(i)) - r) * G.user(v);
  return out;
}

/// Weighted summation direction:
/// sum_j 2(p_u.q_j - r) W2^T q_j and sum_v 2(p_v.q_i - r) W4^T p_v with
/// p = W1 a + W2 g on users and q = W3 a + W4 g on items.
template <typename Scalar>
Matrix<Scalar> weighted_sum_direction(const NodeFeatures<Scalar>& G,
                                      const NodeFeatures<Scalar>& A, std::span<const Rated> batch,
                                      const SumWeights<Scalar>& W) {
  const Neighbourhoods nb(G.n_users, G.n_items(), batch);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(G.nodes.rows(), G.dim());
  auto p = [&](Index u) -> Vector<Scalar> {
    return W.w1 * A.user(u).transpose() + W.w2 * G.user(u).transpose();
  };
  auto q = [&](Index i) -> Vector<Scalar> {
    return W.w3 * A.item(i).transpose() + W.w4 * G.item(i).transpose();
  };
  for (Index u = 0; u < G.n_users; ++u)
    for (const auto& [j, r] : nb.of_user[static_cast<std::size_t>(u)]) {
      const Vector<Scalar> qj = q(j);
      out.row(u) += (2 * (p(u).dot(qj) - r) * (W.w2.transpose() * qj)).transpose();
    }
  for (Index i = 0; i < G.n_items(); ++i)
    for (const auto& [v, r] : nb.of_item[static_cast<std::size_t>(i)]) {
      const Vector<Scalar> pv = p(v);
      out.row(G.n_users + i) += (2 * (pv.dot(q(i)) - r) * (W.w4.transpose() * pv)).transpose();
    }
  return out;
}

}  // namespace crossfuse::analytic
