#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossfuse/auxnet.hpp"
#include "crossfuse/backbone.hpp"
#include "crossfuse/checkpoint.hpp"
#include "crossfuse/data.hpp"
#include "crossfuse/eval.hpp"
#include "crossfuse/fusion.hpp"
#include "crossfuse/optim.hpp"

namespace crossfuse {

struct TrainConfig {
  Real eta1 = 1e-3;  ///< stage-1 learning rate
  Real eta2 = 1e-3;  ///< stage-2 learning rate
  Index epochs = 200;
  /// Stage-1 epochs; 0 reuses `epochs`.
  Index aux_epochs = 0;
  Index batch_size = 1024;
  /// Stage-1 batch size; 0 reuses `batch_size`.
  Index aux_batch_size = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Epochs without validation improvement before stopping; 0 disables.
  Index patience = 20;
  std::uint64_t seed = 2024;
  /// Cutoff of the validation NDCG used for model selection.
  int select_n = 10;

  Index stage1_epochs() const { return aux_epochs > 0 ? aux_epochs : epochs; }
  Index stage1_batch_size() const { return aux_batch_size > 0 ? aux_batch_size : batch_size; }
  void validate() const;
};

/// Independent sub-stream seeds derived from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct EpochRecord {
  std::string stage;  ///< "aux" or "graph"
  Index epoch = 0;
  Real loss = 0;
  std::optional<Real> validation_ndcg;
  Real wall_seconds = 0;
};

/// Tab-separated training log: stage, epoch, loss, validation NDCG, wall time.
std::string format_log(const std::vector<EpochRecord>& log);
std::vector<EpochRecord> parse_log(const std::string& text);

/// Stage-1 examples for one epoch: observed training triplets in shuffled
/// order. On implicit data each positive is followed by one sampled r = 0
/// negative of the same user.
std::vector<Rated> stage1_examples(const InteractionDataset& ds, Rng& rng);

struct Stage1Result {
  Features aux;  ///< eval-mode A_U stacked over A_V
  std::vector<EpochRecord> log;
};

/// Fits the auxiliary model with mini-batch steps at rate eta1 and returns
/// its eval-mode outputs.
Stage1Result train_stage1(const InteractionDataset& ds, AuxModel& model, const TrainConfig& cfg);

/// Stage 2: backbone training against frozen auxiliary features.
class Stage2Trainer {
 public:
  Stage2Trainer(const InteractionDataset& ds, std::shared_ptr<const SparseXr> adjacency,
                const BackboneConfig& backbone, const TrainConfig& train,
                const FusionConfig& fusion, std::optional<Features> aux);

  /// One pass over the training positives followed by validation.
  /// Returns the epoch record (also appended to the log).
  const EpochRecord& run_epoch();

  /// Runs until `epochs` or early stop.
  void fit();
  bool finished() const;

  Index epoch() const { return epoch_; }
  bool stopped_early() const { return stopped_; }
  const std::vector<EpochRecord>& log() const { return log_; }
  std::optional<Real> best_metric() const { return best_metric_; }

  /// Scoring vectors of the retained (best validation) parameters.
  ScoringVectors<Real> best_scoring() const;
  /// Scoring vectors of the current parameters.
  ScoringVectors<Real> current_scoring();

  const EmbeddingTable<Real>& embeddings() const { return e0_; }
  const std::optional<Features>& aux() const { return aux_; }
  std::size_t parameter_count();
  ParamList params();

  Checkpoint checkpoint() const;
  /// Restores every piece of training state written by checkpoint().
  void restore(const Checkpoint& ck);

 private:
  ScoringVectors<Real> scoring(const MatrixXr& e0, const SumWeights<Real>* w) const;
  std::optional<Real> validate(const ScoringVectors<Real>& s) const;

  const InteractionDataset* ds_;
  std::shared_ptr<const SparseXr> adj_;
  BackboneConfig backbone_cfg_;
  TrainConfig cfg_;
  FusionConfig fusion_;
  std::optional<Features> aux_;

  mutable LightGcn<Real> model_;
  EmbeddingTable<Real> e0_;
  SumWeights<Real> weights_;
  Optimizer optimizer_;
  Rng rng_;

  Index epoch_ = 0;
  bool stopped_ = false;
  std::optional<Real> best_metric_;
  Index bad_epochs_ = 0;
  MatrixXr best_e0_;
  SumWeights<Real> best_weights_;
  std::vector<EpochRecord> log_;

  std::vector<UserItem> positives_;
  std::vector<std::vector<Index>> train_items_;
  std::vector<std::vector<Index>> validation_items_;
};

/// Items held out for evaluation of `split`, ranked after excluding train
/// items (and validation items when scoring the test split).
RankingReport evaluate_split(const InteractionDataset& ds, const ScoringVectors<Real>& s,
                             Split split, const std::vector<int>& ns, bool per_user = false,
                             Recommendations* recs_out = nullptr);

}  // namespace crossfuse
