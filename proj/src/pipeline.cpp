#include "crossfuse/pipeline.hpp"

#include <algorithm>

#include "crossfuse/error.hpp"

namespace crossfuse {

void ModelConfig::validate() const {
  backbone.validate();
  aux.validate();
  train.validate();
  fusion.validate();
  for (Real e : {epsilon_user, epsilon_item})
    if (!(e >= 0 && e <= 1)) throw ConfigError("graph.epsilon_user/epsilon_item must lie in [0, 1]");
  if (similarity.max_neighbors < 0) throw ConfigError("graph.max_neighbors must be >= 0");
}

Graphs build_graphs(const InteractionDataset& ds, const ModelConfig& cfg) {
  Graphs g;
  g.adjacency = std::make_shared<const SparseXr>(normalize_bipartite<Real>(ds, &g.adjacency_report));
  const auto R = interaction_matrix<Real>(ds, true);
  g.user_similarity = std::make_shared<const SparseXr>(
      build_similarity_graph<Real>(R, Axis::Rows, cfg.epsilon_user, cfg.similarity, &g.user_report));
  g.item_similarity = std::make_shared<const SparseXr>(build_similarity_graph<Real>(
      R, Axis::Columns, cfg.epsilon_item, cfg.similarity, &g.item_report));
  return g;
}

AuxModel make_aux_model(const Graphs& g, MatrixXr user_features, MatrixXr item_features,
                        const ModelConfig& cfg) {
  AuxModel model(AuxTower(std::move(user_features), g.user_similarity, cfg.aux),
                 AuxTower(std::move(item_features), g.item_similarity, cfg.aux));
  model.init(derive_seed(cfg.train.seed, 0));
  return model;
}

RunOutcome train_and_evaluate(const InteractionDataset& ds, const Graphs& g,
                              const std::optional<Features>& aux, const ModelConfig& cfg,
                              const std::vector<int>& ns, Index rec_depth) {
  std::optional<Features> frozen;
  if (cfg.fusion.variant != FusionVariant::None) frozen = aux;
  Stage2Trainer trainer(ds, g.adjacency, cfg.backbone, cfg.train, cfg.fusion, std::move(frozen));
  trainer.fit();
  RunOutcome out;
  out.scoring = trainer.best_scoring();
  std::vector<int> cutoffs = ns;
  const int depth = std::max<int>(static_cast<int>(rec_depth), *std::max_element(ns.begin(), ns.end()));
  out.test = evaluate_split(ds, out.scoring, Split::Test, cutoffs, false, &out.recommendations);
  if (depth > *std::max_element(ns.begin(), ns.end())) {
    // Longer lists were requested for downstream analyses; metrics only
    // look at the first N entries anyway.
    const auto truth = ds.items_by_user(Split::Test);
    const auto train = ds.items_by_user(Split::Train);
    const auto validation = ds.items_by_user(Split::Validation);
    out.recommendations = recommend(out.scoring.users, out.scoring.items, depth, truth, {&train, &validation});
  }
  out.log = trainer.log();
  out.epochs_run = trainer.epoch();
  return out;
}

}  // namespace crossfuse
