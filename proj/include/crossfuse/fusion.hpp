#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossfuse/backbone.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse {

enum class FusionVariant { None, Cross, Concat, PlainSum, WeightedSum };

const char* variant_name(FusionVariant v);
FusionVariant parse_variant(const std::string& name);

/// Objective on the (fused) scores in stage 2: pairwise BPR, or squared
/// error against 1 for positives and 0 for the sampled negatives.
enum class GraphLoss { Bpr, Mse };

const char* graph_loss_name(GraphLoss l);
GraphLoss parse_graph_loss(const std::string& name);

struct FusionConfig {
  Real lambda1 = 0.05;
  Real lambda2 = 0.001;
  FusionVariant variant = FusionVariant::Cross;
  GraphLoss graph_loss = GraphLoss::Bpr;
  /// Also apply the cross penalties to the sampled negative pairs.
  bool apply_to_negatives = false;

  void validate() const {
    if (!(lambda1 >= 0 && std::isfinite(lambda1)) || !(lambda2 >= 0 && std::isfinite(lambda2)))
      throw ConfigError("fusion.lambda1 and fusion.lambda2 must be finite and >= 0");
  }
};

template <typename Scalar>
struct CrossScores {
  Scalar r_a = 0;   ///< a_u . a_i
  Scalar r_c1 = 0;  ///< g_u . a_i
  Scalar r_c2 = 0;  ///< a_u . g_i
};

template <typename GU, typename GI, typename AU, typename AI>
auto cross_scores(const Eigen::MatrixBase<GU>& g_u, const Eigen::MatrixBase<GI>& g_i,
                  const Eigen::MatrixBase<AU>& a_u, const Eigen::MatrixBase<AI>& a_i) {
  using Scalar = typename GU::Scalar;
  const auto d = g_u.size();
  if (g_i.size() != d || a_u.size() != d || a_i.size() != d)
    throw DimensionError("cross_scores: graph and auxiliary vectors must share one dimension");
  return CrossScores<Scalar>{a_u.dot(a_i), g_u.dot(a_i), a_u.dot(g_i)};
}

template <typename Scalar>
void require_same_layout(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                         const char* who) {
  if (G.n_users != A.n_users || G.nodes.rows() != A.nodes.rows() || G.dim() != A.dim())
    throw DimensionError(std::string(who) + ": graph features are " +
                         std::to_string(G.nodes.rows()) + "x" + std::to_string(G.dim()) +
                         ", auxiliary features are " + std::to_string(A.nodes.rows()) + "x" +
                         std::to_string(A.dim()));
}

template <typename Scalar>
struct CrossFusionLoss {
  Scalar c1 = 0;
  Scalar c2 = 0;
};

/// L_c1 = sum (r_a - r_c1)^2 and L_c2 = sum (r_a - r_c2)^2 over `pairs`.
/// When dG is given, the gradient of lambda1 L_c1 + lambda2 L_c2 with
/// respect to G is accumulated into it. A is read-only.
template <typename Scalar>
CrossFusionLoss<Scalar> cross_fusion_loss(const NodeFeatures<Scalar>& G,
                                          const NodeFeatures<Scalar>& A,
                                          std::span<const UserItem> pairs, Scalar lambda1,
                                          Scalar lambda2, NodeFeatures<Scalar>* dG = nullptr) {
  if (pairs.empty()) throw DataError("cross_fusion_loss: empty batch");
  require_same_layout(G, A, "cross_fusion_loss");
  CrossFusionLoss<Scalar> loss;
  for (const auto& p : pairs) {
    const auto s = cross_scores(G.user(p.user), G.item(p.item), A.user(p.user), A.item(p.item));
    const Scalar e1 = s.r_c1 - s.r_a;
    const Scalar e2 = s.r_c2 - s.r_a;
    loss.c1 += e1 * e1;
    loss.c2 += e2 * e2;
    if (dG) {
      dG->user(p.user) += (Scalar(2) * lambda1 * e1) * A.item(p.item);
      dG->item(p.item) += (Scalar(2) * lambda2 * e2) * A.user(p.user);
    }
  }
  return loss;
}

/// sum (f_u . f_i - r)^2 over rated pairs; the stage-1 objective on
/// auxiliary outputs and the squared-error graph objective share it.
template <typename Scalar>
Scalar dot_mse_loss(const NodeFeatures<Scalar>& F, std::span<const Rated> batch,
                    NodeFeatures<Scalar>* dF = nullptr) {
  if (batch.empty()) throw DataError("dot_mse_loss: empty batch");
  Scalar loss = 0;
  for (const auto& t : batch) {
    const Scalar e = F.user(t.user).dot(F.item(t.item)) - t.rating;
    loss += e * e;
    if (dF) {
      dF->user(t.user) += (Scalar(2) * e) * F.item(t.item);
      dF->item(t.item) += (Scalar(2) * e) * F.user(t.user);
    }
  }
  return loss;
}

/// dot_mse_loss over (u, i+, 1) and (u, i-, 0) for every triple, on separate
/// user and item score matrices.
template <typename Scalar>
Scalar triple_mse_loss(const Matrix<Scalar>& P, const Matrix<Scalar>& Q,
                       std::span<const BprTriple> batch, Matrix<Scalar>* dP, Matrix<Scalar>* dQ) {
  Scalar loss = 0;
  auto term = [&](Index u, Index i, Scalar r) {
    const Scalar e = P.row(u).dot(Q.row(i)) - r;
    loss += e * e;
    if (dP && dQ) {
      dP->row(u) += (Scalar(2) * e) * Q.row(i);
      dQ->row(i) += (Scalar(2) * e) * P.row(u);
    }
  };
  for (const auto& t : batch) {
    term(t.user, t.positive, Scalar(1));
    term(t.user, t.negative, Scalar(0));
  }
  return loss;
}

template <typename Scalar>
struct MseFusedLoss {
  Scalar graph = 0;
  CrossFusionLoss<Scalar> cross;
  Scalar total(Scalar lambda1, Scalar lambda2) const {
    return graph + lambda1 * cross.c1 + lambda2 * cross.c2;
  }
};

/// Squared-error graph loss plus the weighted cross penalties, at the
/// feature level.
template <typename Scalar>
MseFusedLoss<Scalar> mse_fused_loss(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                                    std::span<const Rated> batch, Scalar lambda1, Scalar lambda2,
                                    NodeFeatures<Scalar>* dG = nullptr) {
  MseFusedLoss<Scalar> loss;
  loss.graph = dot_mse_loss(G, batch, dG);
  std::vector<UserItem> pairs;
  pairs.reserve(batch.size());
  for (const auto& t : batch) pairs.push_back({t.user, t.item});
  loss.cross = cross_fusion_loss(G, A, std::span<const UserItem>(pairs), lambda1, lambda2, dG);
  return loss;
}

/// Concatenation fusion: sum (a_u . a_i + g_u . g_i - r)^2.
template <typename Scalar>
Scalar concat_fusion_loss(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                          std::span<const Rated> batch, NodeFeatures<Scalar>* dG = nullptr) {
  if (batch.empty()) throw DataError("concat_fusion_loss: empty batch");
  require_same_layout(G, A, "concat_fusion_loss");
  Scalar loss = 0;
  for (const auto& t : batch) {
    const Scalar e = A.user(t.user).dot(A.item(t.item)) + G.user(t.user).dot(G.item(t.item)) -
                     t.rating;
    loss += e * e;
    if (dG) {
      dG->user(t.user) += (Scalar(2) * e) * G.item(t.item);
      dG->item(t.item) += (Scalar(2) * e) * G.user(t.user);
    }
  }
  return loss;
}

/// Weight matrices of the (weighted) summation fusion:
/// p_u = W1 a_u + W2 g_u, q_i = W3 a_i + W4 g_i.
template <typename Scalar = Real>
struct SumWeights {
  Matrix<Scalar> w1, w2, w3, w4;
  Matrix<Scalar> g1, g2, g3, g4;

  static SumWeights identity(Index dim) {
    SumWeights w;
    w.w1 = w.w2 = w.w3 = w.w4 = Matrix<Scalar>::Identity(dim, dim);
    w.zero_grad();
    return w;
  }

  void zero_grad() {
    g1 = Matrix<Scalar>::Zero(w1.rows(), w1.cols());
    g2 = Matrix<Scalar>::Zero(w2.rows(), w2.cols());
    g3 = Matrix<Scalar>::Zero(w3.rows(), w3.cols());
    g4 = Matrix<Scalar>::Zero(w4.rows(), w4.cols());
  }

  void check(Index aux_dim, Index graph_dim) const {
    const Index out = w1.rows();
    if (w2.rows() != out || w3.rows() != out || w4.rows() != out || w1.cols() != aux_dim ||
        w3.cols() != aux_dim || w2.cols() != graph_dim || w4.cols() != graph_dim)
      throw DimensionError("summation fusion weights have inconsistent shapes");
  }

  ParamList params(const std::string& prefix)
    requires std::is_same_v<Scalar, Real>
  {
    return {param_ref(prefix + "w1", w1, g1), param_ref(prefix + "w2", w2, g2),
            param_ref(prefix + "w3", w3, g3), param_ref(prefix + "w4", w4, g4)};
  }
};

/// Weighted summation fusion: sum ((W1 a_u + W2 g_u).(W3 a_i + W4 g_i) - r)^2.
/// The plain summation is the identity-weight case.
template <typename Scalar>
Scalar weighted_sum_fusion_loss(const NodeFeatures<Scalar>& G, const NodeFeatures<Scalar>& A,
                                std::span<const Rated> batch, const SumWeights<Scalar>& W,
                                NodeFeatures<Scalar>* dG = nullptr,
                                SumWeights<Scalar>* dW = nullptr) {
  if (batch.empty()) throw DataError("weighted_sum_fusion_loss: empty batch");
  if (G.nodes.rows() != A.nodes.rows() || G.n_users != A.n_users)
    throw DimensionError("weighted_sum_fusion_loss: node layouts differ");
  W.check(A.dim(), G.dim());
  Scalar loss = 0;
  for (const auto& t : batch) {
    const Vector<Scalar> p =
        W.w1 * A.user(t.user).transpose() + W.w2 * G.user(t.user).transpose();
    const Vector<Scalar> q =
        W.w3 * A.item(t.item).transpose() + W.w4 * G.item(t.item).transpose();
    const Scalar e = p.dot(q) - t.rating;
    loss += e * e;
    const Scalar c = Scalar(2) * e;
    if (dG) {
      dG->user(t.user) += c * (W.w2.transpose() * q).transpose();
      dG->item(t.item) += c * (W.w4.transpose() * p).transpose();
    }
    if (dW) {
      dW->g1.noalias() += c * q * A.user(t.user);
      dW->g2.noalias() += c * q * G.user(t.user);
      dW->g3.noalias() += c * p * A.item(t.item);
      dW->g4.noalias() += c * p * G.item(t.item);
    }
  }
  return loss;
}

// ---------------------------------------------------------------- stage 2

/// User and item vectors whose dot products are the ranking scores of a
/// fusion variant.
template <typename Scalar>
struct ScoringVectors {
  Matrix<Scalar> users;
  Matrix<Scalar> items;
};

template <typename Scalar>
ScoringVectors<Scalar> fuse(FusionVariant variant, const NodeFeatures<Scalar>& G,
                            const NodeFeatures<Scalar>* A, const SumWeights<Scalar>* W) {
  ScoringVectors<Scalar> out;
  auto need_aux = [&] {
    if (!A) throw OrderingError(std::string(variant_name(variant)) + " fusion needs auxiliary features");
    if (A->nodes.rows() != G.nodes.rows() || A->n_users != G.n_users)
      throw DimensionError("auxiliary and graph features cover different node sets");
  };
  switch (variant) {
    case FusionVariant::None:
    case FusionVariant::Cross:
      out.users = G.users();
      out.items = G.items();
      break;
    case FusionVariant::Concat: {
      need_aux();
      const Index da = A->dim(), dg = G.dim();
      out.users.resize(G.n_users, da + dg);
      out.items.resize(G.n_items(), da + dg);
      out.users << A->users(), G.users();
      out.items << A->items(), G.items();
      break;
    }
    case FusionVariant::PlainSum:
      need_aux();
      if (A->dim() != G.dim()) throw DimensionError("summation fusion needs equal dimensions");
      out.users = A->users() + G.users();
      out.items = A->items() + G.items();
      break;
    case FusionVariant::WeightedSum:
      need_aux();
      if (!W) throw ConfigError("weighted-sum fusion needs weight matrices");
      W->check(A->dim(), G.dim());
      out.users = A->users() * W->w1.transpose() + G.users() * W->w2.transpose();
      out.items = A->items() * W->w3.transpose() + G.items() * W->w4.transpose();
      break;
  }
  return out;
}

/// Pulls gradients w.r.t. scoring vectors back to graph features (and the
/// summation weights). Nothing flows into A.
template <typename Scalar>
Matrix<Scalar> unfuse_gradient(FusionVariant variant, const NodeFeatures<Scalar>& G,
                               const NodeFeatures<Scalar>* A, SumWeights<Scalar>* W,
                               const ScoringVectors<Scalar>& d) {
  Matrix<Scalar> dG(G.nodes.rows(), G.dim());
  switch (variant) {
    case FusionVariant::None:
    case FusionVariant::Cross:
    case FusionVariant::PlainSum:
      dG.topRows(G.n_users) = d.users;
      dG.bottomRows(G.n_items()) = d.items;
      break;
    case FusionVariant::Concat:
      dG.topRows(G.n_users) = d.users.rightCols(G.dim());
      dG.bottomRows(G.n_items()) = d.items.rightCols(G.dim());
      break;
    case FusionVariant::WeightedSum:
      dG.topRows(G.n_users).noalias() = d.users * W->w2;
      dG.bottomRows(G.n_items()).noalias() = d.items * W->w4;
      W->g1.noalias() += d.users.transpose() * A->users();
      W->g2.noalias() += d.users.transpose() * G.users();
      W->g3.noalias() += d.items.transpose() * A->items();
      W->g4.noalias() += d.items.transpose() * G.items();
      break;
  }
  return dG;
}

template <typename Scalar>
struct FusedLoss {
  Scalar ranking = 0;
  CrossFusionLoss<Scalar> cross;
  Scalar regularizer = 0;
  Scalar lambda1 = 0;
  Scalar lambda2 = 0;
  Scalar total() const { return ranking + lambda1 * cross.c1 + lambda2 * cross.c2 + regularizer; }
};

/// Stage-2 objective L_g + lambda1 L_c1 + lambda2 L_c2 (cross variant) or
/// L_g on the fused score (other variants), backpropagated through the
/// backbone into E0.grad. With both weights zero the cross variant runs
/// exactly the plain BPR path.
template <typename Scalar>
FusedLoss<Scalar> fused_objective_grad(LightGcn<Scalar>& model, EmbeddingTable<Scalar>& E0,
                                       const NodeFeatures<Scalar>* A, SumWeights<Scalar>* W,
                                       std::span<const BprTriple> batch, Scalar lambda_reg,
                                       const FusionConfig& cfg) {
  if (batch.empty()) throw DataError("fused_objective_grad: empty batch");
  const auto G = model.forward(E0.values);
  const auto S = fuse(cfg.variant, G, A, W);
  ScoringVectors<Scalar> dS{Matrix<Scalar>::Zero(S.users.rows(), S.users.cols()),
                            Matrix<Scalar>::Zero(S.items.rows(), S.items.cols())};
  FusedLoss<Scalar> loss;
  loss.ranking = cfg.graph_loss == GraphLoss::Bpr
                     ? bpr_feature_loss(S.users, S.items, batch, &dS.users, &dS.items)
                     : triple_mse_loss(S.users, S.items, batch, &dS.users, &dS.items);
  Matrix<Scalar> dG = unfuse_gradient(cfg.variant, G, A, W, dS);

  if (cfg.variant == FusionVariant::Cross) {
    if (!A) throw OrderingError("cross fusion needs auxiliary features");
    require_same_layout(G, *A, "fused_objective_grad");
    loss.lambda1 = static_cast<Scalar>(cfg.lambda1);
    loss.lambda2 = static_cast<Scalar>(cfg.lambda2);
    if (loss.lambda1 != Scalar(0) || loss.lambda2 != Scalar(0)) {
      std::vector<UserItem> pairs;
      pairs.reserve(batch.size() * (cfg.apply_to_negatives ? 2 : 1));
      for (const auto& t : batch) pairs.push_back({t.user, t.positive});
      if (cfg.apply_to_negatives)
        for (const auto& t : batch) pairs.push_back({t.user, t.negative});
      NodeFeatures<Scalar> dGf(std::move(dG), G.n_users);
      loss.cross = cross_fusion_loss(G, *A, std::span<const UserItem>(pairs), loss.lambda1,
                                     loss.lambda2, &dGf);
      dG = std::move(dGf.nodes);
    }
  }
  E0.grad.noalias() += model.backward(dG);
  loss.regularizer = add_l2_regularizer(E0, lambda_reg);
  return loss;
}

// ---------------------------------------------------------------- temporal

/// Per-period user and item tables of a host sequential model, with each
/// node's sorted list of active periods.
template <typename Scalar = Real>
struct TemporalEmbeddings {
  std::vector<Matrix<Scalar>> users;
  std::vector<Matrix<Scalar>> items;
  std::vector<std::vector<int>> user_periods;
  std::vector<std::vector<int>> item_periods;

  static std::optional<int> last_before(const std::vector<int>& periods, int t) {
    auto it = std::lower_bound(periods.begin(), periods.end(), t);
    if (it == periods.begin()) return std::nullopt;
    return *std::prev(it);
  }
  std::optional<int> prior_user_period(Index u, int t) const {
    return last_before(user_periods[static_cast<std::size_t>(u)], t);
  }
  std::optional<int> prior_item_period(Index i, int t) const {
    return last_before(item_periods[static_cast<std::size_t>(i)], t);
  }
};

struct TemporalInteraction {
  Index user = 0;
  Index item = 0;
  int period = 0;
  /// Explicit prior periods; derived from activity lists when absent.
  std::optional<int> user_prior;
  std::optional<int> item_prior;
};

template <typename Scalar>
struct TemporalGrad {
  std::vector<Matrix<Scalar>> users;
  std::vector<Matrix<Scalar>> items;
};

/// Smoothing penalty between consecutive periods:
/// lambda1 (h_u^{t_u}.h_i^{t_u} - h_u^t.h_i^{t_u})^2 +
/// lambda2 (h_u^{t_i}.h_i^{t_i} - h_u^{t_i}.h_i^t)^2, where t_u, t_i are the
/// last prior active periods. Terms without a prior period vanish; only the
/// period-t tables receive gradient.
template <typename Scalar>
Scalar temporal_fusion_loss(const TemporalEmbeddings<Scalar>& emb,
                            std::span<const TemporalInteraction> batch, Scalar lambda1,
                            Scalar lambda2, TemporalGrad<Scalar>* grad = nullptr) {
  const auto periods = static_cast<int>(emb.users.size());
  if (grad) {
    grad->users.resize(emb.users.size());
    grad->items.resize(emb.items.size());
    for (std::size_t t = 0; t < emb.users.size(); ++t) {
      if (grad->users[t].size() == 0) grad->users[t] = Matrix<Scalar>::Zero(emb.users[t].rows(), emb.users[t].cols());
      if (grad->items[t].size() == 0) grad->items[t] = Matrix<Scalar>::Zero(emb.items[t].rows(), emb.items[t].cols());
    }
  }
  Scalar loss = 0;
  for (const auto& x : batch) {
    if (x.period < 0 || x.period >= periods) throw DataError("temporal period out of range");
    const auto tu = x.user_prior ? x.user_prior : emb.prior_user_period(x.user, x.period);
    const auto ti = x.item_prior ? x.item_prior : emb.prior_item_period(x.item, x.period);
    if ((tu && (*tu >= x.period || *tu < 0)) || (ti && (*ti >= x.period || *ti < 0)))
      throw DataError("prior period must precede the current period");
    const auto t = static_cast<std::size_t>(x.period);
    const auto hu_t = emb.users[t].row(x.user);
    const auto hi_t = emb.items[t].row(x.item);
    if (tu) {
      const auto p = static_cast<std::size_t>(*tu);
      const auto hu_p = emb.users[p].row(x.user);
      const auto hi_p = emb.items[p].row(x.item);
      const Scalar e = hu_p.dot(hi_p) - hu_t.dot(hi_p);
      loss += lambda1 * e * e;
      if (grad) grad->users[t].row(x.user) += (-Scalar(2) * lambda1 * e) * hi_p;
    }
    if (ti) {
      const auto p = static_cast<std::size_t>(*ti);
      const auto hu_p = emb.users[p].row(x.user);
      const auto hi_p = emb.items[p].row(x.item);
      const Scalar e = hu_p.dot(hi_p) - hu_p.dot(hi_t);
      loss += lambda2 * e * e;
      if (grad) grad->items[t].row(x.item) += (-Scalar(2) * lambda2 * e) * hu_p;
    }
  }
  return loss;
}

}  // namespace crossfuse
