#pragma once

#include <memory>
#include <optional>

#include "crossfuse/auxnet.hpp"
#include "crossfuse/backbone.hpp"
#include "crossfuse/data.hpp"
#include "crossfuse/fusion.hpp"
#include "crossfuse/graph.hpp"
#include "crossfuse/trainer.hpp"

namespace crossfuse {

/// Everything that determines a trained model besides the data.
struct ModelConfig {
  BackboneConfig backbone;
  AuxNetConfig aux;
  TrainConfig train;
  FusionConfig fusion;
  Real epsilon_user = 0.3;
  Real epsilon_item = 0.3;
  SimilarityOptions similarity;

  void validate() const;
};

struct Graphs {
  std::shared_ptr<const SparseXr> adjacency;
  std::shared_ptr<const SparseXr> user_similarity;
  std::shared_ptr<const SparseXr> item_similarity;
  GraphReport adjacency_report;
  GraphReport user_report;
  GraphReport item_report;
};

/// Normalized bipartite adjacency plus user-user and item-item similarity
/// graphs, all from the training split.
Graphs build_graphs(const InteractionDataset& ds, const ModelConfig& cfg);

/// Auxiliary towers over the given encoded attributes, initialized from
/// the run seed.
AuxModel make_aux_model(const Graphs& g, MatrixXr user_features, MatrixXr item_features,
                        const ModelConfig& cfg);

/// Result of one full two-stage run of a single fusion variant.
struct RunOutcome {
  RankingReport test;
  Recommendations recommendations;
  ScoringVectors<Real> scoring;
  std::vector<EpochRecord> log;
  Index epochs_run = 0;
};

/// Stage 2 for one variant given (possibly absent) frozen auxiliary
/// features, evaluated on the test split with the retained parameters.
RunOutcome train_and_evaluate(const InteractionDataset& ds, const Graphs& g,
                              const std::optional<Features>& aux, const ModelConfig& cfg,
                              const std::vector<int>& ns, Index rec_depth = 0);

}  // namespace crossfuse
