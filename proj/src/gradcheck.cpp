#include "crossfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "crossfuse/analytic.hpp"
#include "crossfuse/auxnet.hpp"
#include "crossfuse/backbone.hpp"
#include "crossfuse/data.hpp"
#include "crossfuse/fusion.hpp"
#include "crossfuse/graph.hpp"

namespace crossfuse {

VectorXr numeric_gradient(const std::function<Real()>& loss, std::span<Real> x, Real step) {
  VectorXr out(static_cast<Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Real saved = x[k];
    x[k] = saved + step;
    const Real plus = loss();
    x[k] = saved - step;
    const Real minus = loss();
    x[k] = saved;
    out[static_cast<Index>(k)] = (plus - minus) / (2 * step);
  }
  return out;
}

Real gradient_error(const VectorXr& analytic, const VectorXr& numeric, Real floor) {
  const Real diff = (analytic - numeric).norm();
  const Real scale = analytic.norm() + numeric.norm();
  return scale < floor ? diff : diff / scale;
}

namespace {

struct Instance {
  InteractionDataset ds;
  std::shared_ptr<const SparseXr> adj;
  std::vector<Rated> rated;
  std::vector<BprTriple> triples;
  MatrixXr e0;
  Features G;
  Features A;
};

MatrixXr normal_matrix(Index rows, Index cols, Real sd, Rng& rng) {
  std::normal_distribution<Real> normal(0.0, sd);
  MatrixXr m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

Instance make_instance(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const Index n = opts.users, m = opts.items, d = opts.dim;
  std::uniform_int_distribution<Index> count(2, std::min<Index>(5, m - 1));
  std::uniform_int_distribution<Index> item(0, m - 1);
  std::vector<Interaction> records;
  for (Index u = 0; u < n; ++u) {
    std::vector<Index> chosen;
    const Index k = count(rng);
    while (static_cast<Index>(chosen.size()) < k) {
      const Index i = item(rng);
      if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
    }
    for (Index i : chosen) records.push_back({u, i, 1.0, std::nullopt, Split::Train});
  }
  Instance inst;
  inst.ds = InteractionDataset(n, m, std::move(records));
  inst.adj = std::make_shared<const SparseXr>(normalize_bipartite<Real>(inst.ds));
  std::uniform_real_distribution<Real> rating(0.0, 1.0);
  for (const auto& p : inst.ds.pairs(Split::Train)) {
    inst.rated.push_back({p.user, p.item, rating(rng)});
    const auto neg = sample_negatives(inst.ds, p.user, 1, rng);
    inst.triples.push_back({p.user, p.item, neg.items.front()});
  }
  inst.e0 = normal_matrix(n + m, d, 0.5, rng);
  inst.G = Features(normal_matrix(n + m, d, 0.7, rng), n);
  inst.A = Features(normal_matrix(n + m, d, 0.7, rng), n);
  return inst;
}

VectorXr flat(std::span<const Real> s) {
  return Eigen::Map<const VectorXr>(s.data(), static_cast<Index>(s.size()));
}

template <typename Derived>
VectorXr flat(const Eigen::PlainObjectBase<Derived>& m) {
  return Eigen::Map<const VectorXr>(m.data(), m.size());
}

template <typename Derived>
std::span<Real> span_of(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

struct Checker {
  const GradCheckOptions& opts;
  std::vector<CheckResult>& out;

  void operator()(const std::string& check, const std::string& tensor,
                  const std::function<Real()>& loss, std::span<Real> x, const VectorXr& analytic) {
    const VectorXr numeric = numeric_gradient(loss, x, opts.step);
    const Real err = gradient_error(analytic, numeric, opts.floor);
    out.push_back({check, tensor, err, opts.tolerance, err <= opts.tolerance});
  }
};

AuxModel make_aux(const Instance& inst, Rng& rng, Index dim) {
  const auto R = interaction_matrix<Real>(inst.ds, true);
  auto su = std::make_shared<const SparseXr>(build_similarity_graph<Real>(R, Axis::Rows, 0.2));
  auto si = std::make_shared<const SparseXr>(build_similarity_graph<Real>(R, Axis::Columns, 0.2));
  AuxNetConfig cfg;
  cfg.hidden = {6};
  cfg.dim = dim;
  cfg.gcn_layers = 2;
  AuxModel model(AuxTower(normal_matrix(inst.ds.n_users(), 5, 1.0, rng), su, cfg),
                 AuxTower(normal_matrix(inst.ds.n_items(), 5, 1.0, rng), si, cfg));
  model.init(rng());
  // Move batch-norm scale and shift away from their identity start.
  std::normal_distribution<Real> jitter(0.0, 0.2);
  for (auto& p : model.params())
    if (p.name.ends_with("gamma") || p.name.ends_with("beta"))
      for (auto& v : p.value) v += jitter(rng);
  return model;
}

}  // namespace

std::vector<CheckResult> finite_difference_suite(std::uint64_t seed, const GradCheckOptions& opts) {
  std::vector<CheckResult> results;
  Checker check{opts, results};
  Instance inst = make_instance(seed, opts);
  Rng rng(seed ^ 0x5deece66dULL);
  const std::span<const BprTriple> triples(inst.triples);
  const std::span<const Rated> rated(inst.rated);
  const Real lambda_reg = 0.01, l1 = 0.7, l2 = 0.3;
  const auto alphas = std::vector<Real>{0.4, 0.3, 0.2, 0.1};

  // BPR through propagation, with the layer-0 regularizer.
  {
    LightGcn<Real> model(inst.adj, inst.ds.n_users(), alphas);
    EmbeddingTable<Real> e(inst.e0);
    bpr_loss_and_grad(model, e, triples, lambda_reg);
    const VectorXr analytic = flat(e.grad);
    check("bpr", "e0", [&] { return bpr_loss_and_grad(model, e, triples, lambda_reg).total(); },
          span_of(e.values), analytic);
  }

  // Cross penalties at the feature level.
  {
    Features G = inst.G;
    Features dG(G.n_users, G.n_items(), G.dim());
    std::vector<UserItem> pairs;
    for (const auto& t : inst.rated) pairs.push_back({t.user, t.item});
    cross_fusion_loss(G, inst.A, std::span<const UserItem>(pairs), l1, l2, &dG);
    check("cross-fusion", "g", [&] {
      const auto c = cross_fusion_loss(G, inst.A, std::span<const UserItem>(pairs), l1, l2);
      return l1 * c.c1 + l2 * c.c2;
    }, span_of(G.nodes), flat(dG.nodes));
  }

  // Stage-1 objective through the auxiliary MLP and similarity GCN.
  {
    AuxModel model = make_aux(inst, rng, opts.dim);
    model.zero_grad();
    model.stage1_loss_and_grad(rated);
    auto params = model.params();
    std::vector<VectorXr> analytic;
    for (const auto& p : params) analytic.push_back(flat(p.grad));
    auto loss = [&] { return dot_mse_loss(model.forward(Mode::Train), rated); };
    for (std::size_t k = 0; k < params.size(); ++k)
      check("stage1", params[k].name, loss, params[k].value, analytic[k]);
  }

  // Stage-2 objectives through propagation, one per fusion variant.
  for (auto variant : {FusionVariant::Cross, FusionVariant::Concat, FusionVariant::PlainSum,
                       FusionVariant::WeightedSum}) {
    LightGcn<Real> model(inst.adj, inst.ds.n_users(), alphas);
    EmbeddingTable<Real> e(inst.e0);
    FusionConfig cfg;
    cfg.variant = variant;
    cfg.lambda1 = l1;
    cfg.lambda2 = l2;
    cfg.apply_to_negatives = variant == FusionVariant::Cross && seed % 2 == 1;
    auto W = SumWeights<Real>::identity(opts.dim);
    if (variant == FusionVariant::WeightedSum) {
      for (auto* w : {&W.w1, &W.w2, &W.w3, &W.w4}) *w += normal_matrix(opts.dim, opts.dim, 0.3, rng);
    }
    auto* wp = variant == FusionVariant::WeightedSum ? &W : nullptr;
    W.zero_grad();
    fused_objective_grad(model, e, &inst.A, wp, triples, lambda_reg, cfg);
    const std::string name = std::string("fused-objective[") + variant_name(variant) + "]";
    auto loss = [&] { return fused_objective_grad(model, e, &inst.A, wp, triples, lambda_reg, cfg).total(); };
    const VectorXr ge = flat(e.grad);
    if (wp) {
      const std::vector<VectorXr> gw{flat(W.g1), flat(W.g2), flat(W.g3), flat(W.g4)};
      check(name, "e0", loss, span_of(e.values), ge);
      const char* names[] = {"w1", "w2", "w3", "w4"};
      MatrixXr* mats[] = {&W.w1, &W.w2, &W.w3, &W.w4};
      for (int k = 0; k < 4; ++k) check(name, names[k], loss, span_of(*mats[k]), gw[static_cast<std::size_t>(k)]);
    } else {
      check(name, "e0", loss, span_of(e.values), ge);
    }
  }

  // Squared-error fused objective at the feature level.
  {
    Features G = inst.G;
    Features dG(G.n_users, G.n_items(), G.dim());
    mse_fused_loss(G, inst.A, rated, l1, l2, &dG);
    check("mse-fused", "g", [&] { return mse_fused_loss(G, inst.A, rated, l1, l2).total(l1, l2); },
          span_of(G.nodes), flat(dG.nodes));
  }

  // Concatenation.
  {
    Features G = inst.G;
    Features dG(G.n_users, G.n_items(), G.dim());
    concat_fusion_loss(G, inst.A, rated, &dG);
    check("concat", "g", [&] { return concat_fusion_loss(G, inst.A, rated); }, span_of(G.nodes),
          flat(dG.nodes));
  }

  // Weighted summation.
  {
    Features G = inst.G;
    auto W = SumWeights<Real>::identity(opts.dim);
    for (auto* w : {&W.w1, &W.w2, &W.w3, &W.w4}) *w += normal_matrix(opts.dim, opts.dim, 0.3, rng);
    W.zero_grad();
    Features dG(G.n_users, G.n_items(), G.dim());
    weighted_sum_fusion_loss(G, inst.A, rated, W, &dG, &W);
    auto loss = [&] { return weighted_sum_fusion_loss(G, inst.A, rated, W); };
    const std::vector<VectorXr> gw{flat(W.g1), flat(W.g2), flat(W.g3), flat(W.g4)};
    check("weighted-sum", "g", loss, span_of(G.nodes), flat(dG.nodes));
    const char* names[] = {"w1", "w2", "w3", "w4"};
    MatrixXr* mats[] = {&W.w1, &W.w2, &W.w3, &W.w4};
    for (int k = 0; k < 4; ++k) check("weighted-sum", names[k], loss, span_of(*mats[k]), gw[static_cast<std::size_t>(k)]);
  }

  // Temporal smoothing penalty on the current-period tables.
  {
    const int periods = 3, now = 2;
    TemporalEmbeddings<Real> emb;
    for (int t = 0; t < periods; ++t) {
      emb.users.push_back(normal_matrix(opts.users, opts.dim, 0.7, rng));
      emb.items.push_back(normal_matrix(opts.items, opts.dim, 0.7, rng));
    }
    std::bernoulli_distribution active(0.6);
    auto activity = [&](Index count) {
      std::vector<std::vector<int>> out(static_cast<std::size_t>(count));
      for (auto& l : out) {
        for (int t = 0; t < now; ++t)
          if (active(rng)) l.push_back(t);
        l.push_back(now);
      }
      return out;
    };
    emb.user_periods = activity(opts.users);
    emb.item_periods = activity(opts.items);
    std::vector<TemporalInteraction> batch;
    for (const auto& t : inst.rated) batch.push_back({t.user, t.item, now, std::nullopt, std::nullopt});
    if (!batch.empty()) batch.front().user_prior = 0;
    TemporalGrad<Real> grad;
    const std::span<const TemporalInteraction> b(batch);
    temporal_fusion_loss(emb, b, l1, l2, &grad);
    auto loss = [&] { return temporal_fusion_loss(emb, b, l1, l2); };
    check("temporal", "h_user[t]", loss, span_of(emb.users[now]), flat(grad.users[now]));
    check("temporal", "h_item[t]", loss, span_of(emb.items[now]), flat(grad.items[now]));
  }
  return results;
}

std::vector<CheckResult> analytic_suite(std::uint64_t seed, const GradCheckOptions& opts) {
  std::vector<CheckResult> results;
  Instance inst = make_instance(seed, opts);
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  const std::span<const Rated> rated(inst.rated);
  const Real l1 = 0.7, l2 = 0.3;
  auto record = [&](const std::string& name, const MatrixXr& closed, const MatrixXr& backward) {
    const Real err = (closed - backward).cwiseAbs().maxCoeff();
    results.push_back({name, "features", err, opts.analytic_tolerance, err <= opts.analytic_tolerance});
  };

  {
    AuxModel model = make_aux(inst, rng, opts.dim);
    model.zero_grad();
    model.stage1_loss_and_grad(rated);
    const Features A = model.forward(Mode::Train);
    record("aux-direction", analytic::aux_direction(A, rated), model.output_grad().nodes);
  }
  {
    Features dG(inst.G.n_users, inst.G.n_items(), inst.G.dim());
    dot_mse_loss(inst.G, rated, &dG);
    record("graph-direction", analytic::graph_direction(inst.G, rated), dG.nodes);
  }
  {
    Features dG(inst.G.n_users, inst.G.n_items(), inst.G.dim());
    mse_fused_loss(inst.G, inst.A, rated, l1, l2, &dG);
    record("fused-direction", analytic::fused_direction(inst.G, inst.A, rated, l1, l2), dG.nodes);
  }
  {
    Features dG(inst.G.n_users, inst.G.n_items(), inst.G.dim());
    concat_fusion_loss(inst.G, inst.A, rated, &dG);
    record("concat-direction", analytic::concat_direction(inst.G, inst.A, rated), dG.nodes);
  }
  {
    auto W = SumWeights<Real>::identity(opts.dim);
    for (auto* w : {&W.w1, &W.w2, &W.w3, &W.w4}) *w += normal_matrix(opts.dim, opts.dim, 0.3, rng);
    Features dG(inst.G.n_users, inst.G.n_items(), inst.G.dim());
    weighted_sum_fusion_loss(inst.G, inst.A, rated, W, &dG);
    record("weighted-sum-direction", analytic::weighted_sum_direction(inst.G, inst.A, rated, W), dG.nodes);
  }
  return results;
}

}  // namespace crossfuse
