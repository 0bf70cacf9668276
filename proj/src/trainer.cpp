#include "crossfuse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "crossfuse/error.hpp"

namespace crossfuse {

void TrainConfig::validate() const {
  if (!(eta1 > 0) || !(eta2 > 0)) throw ConfigError("train.eta1 and train.eta2 must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (aux_epochs < 0) throw ConfigError("train.aux_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (aux_batch_size < 0) throw ConfigError("train.aux_batch_size must be >= 0");
  if (patience < 0) throw ConfigError("train.patience must be >= 0");
  if (select_n < 1) throw ConfigError("train.select_n must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_log(const std::vector<EpochRecord>& log) {
  std::string out = "stage\tepoch\tloss\tvalidation_ndcg\twall_seconds\n";
  for (const auto& r : log) {
    out += r.stage + '\t' + std::to_string(r.epoch) + '\t' + format_real(r.loss) + '\t' +
           (r.validation_ndcg ? format_real(*r.validation_ndcg) : std::string("-")) + '\t' +
           format_real(r.wall_seconds) + '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_log(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    EpochRecord r;
    std::string loss, ndcg, wall;
    if (!(fields >> r.stage >> r.epoch >> loss >> ndcg >> wall))
      throw DataError("malformed training log line: " + line);
    r.loss = std::stod(loss);
    if (ndcg != "-") r.validation_ndcg = std::stod(ndcg);
    r.wall_seconds = std::stod(wall);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

Real seconds_since(Clock::time_point start) {
  return std::chrono::duration<Real>(Clock::now() - start).count();
}

void check_finite(Real loss, const char* stage, Index epoch) {
  if (!std::isfinite(loss))
    throw NumericalError(std::string(stage) + " loss diverged at epoch " + std::to_string(epoch));
}

}  // namespace

std::vector<Rated> stage1_examples(const InteractionDataset& ds, Rng& rng) {
  auto rated = ds.rated(Split::Train);
  if (rated.empty()) throw DataError("no training interactions");
  std::shuffle(rated.begin(), rated.end(), rng);
  if (!ds.implicit()) return rated;
  std::vector<Rated> out;
  out.reserve(rated.size() * 2);
  for (const auto& t : rated) {
    out.push_back(t);
    const auto neg = sample_negatives(ds, t.user, 1, rng);
    if (!neg.items.empty()) out.push_back({t.user, neg.items.front(), 0.0});
  }
  return out;
}

Stage1Result train_stage1(const InteractionDataset& ds, AuxModel& model, const TrainConfig& cfg) {
  cfg.validate();
  Stage1Result result;
  Rng rng(derive_seed(cfg.seed, 1));
  const auto params = model.params();
  Optimizer opt(cfg.optimizer, cfg.eta1);
  for (Index epoch = 1; epoch <= cfg.stage1_epochs(); ++epoch) {
    const auto start = Clock::now();
    const auto examples = stage1_examples(ds, rng);
    Real total = 0;
    const auto batch = static_cast<std::size_t>(cfg.stage1_batch_size());
    for (std::size_t b = 0; b < examples.size(); b += batch) {
      const auto end = std::min(examples.size(), b + batch);
      model.zero_grad();
      const Real loss = model.stage1_loss_and_grad(
          std::span<const Rated>(examples.data() + b, end - b));
      check_finite(loss, "stage-1", epoch);
      total += loss;
      opt.step(params);
    }
    result.log.push_back(
        {"aux", epoch, total / static_cast<Real>(examples.size()), std::nullopt, seconds_since(start)});
  }
  result.aux = model.forward(Mode::Eval);
  if (!result.aux.nodes.allFinite()) throw NumericalError("stage-1 produced non-finite features");
  return result;
}

// ---------------------------------------------------------------- stage 2

Stage2Trainer::Stage2Trainer(const InteractionDataset& ds, std::shared_ptr<const SparseXr> adjacency,
                             const BackboneConfig& backbone, const TrainConfig& train,
                             const FusionConfig& fusion, std::optional<Features> aux)
    : ds_(&ds),
      adj_(std::move(adjacency)),
      backbone_cfg_(backbone),
      cfg_(train),
      fusion_(fusion),
      aux_(std::move(aux)),
      model_(adj_, ds.n_users(), [&] {
        backbone.validate();
        return backbone.layer_weights();
      }()),
      rng_(derive_seed(train.seed, 3)) {
  cfg_.validate();
  fusion_.validate();
  if (adj_->rows() != ds.n_users() + ds.n_items())
    throw DimensionError("adjacency does not cover the dataset's users and items");
  if (fusion_.variant != FusionVariant::None && !aux_)
    throw OrderingError(std::string(variant_name(fusion_.variant)) +
                        " training needs stage-1 auxiliary features (run train-aux first)");
  if (aux_) {
    if (aux_->n_users != ds.n_users() || aux_->n_items() != ds.n_items())
      throw DimensionError("auxiliary features cover " + std::to_string(aux_->n_users) + "+" +
                           std::to_string(aux_->n_items()) + " nodes, dataset has " +
                           std::to_string(ds.n_users()) + "+" + std::to_string(ds.n_items()));
    if (aux_->dim() != backbone.dim &&
        (fusion_.variant == FusionVariant::Cross || fusion_.variant == FusionVariant::PlainSum ||
         fusion_.variant == FusionVariant::WeightedSum))
      throw DimensionError("auxiliary dimension " + std::to_string(aux_->dim()) +
                           " differs from graph dimension " + std::to_string(backbone.dim));
  }
  e0_ = init_embeddings(ds.n_users() + ds.n_items(), backbone.dim, derive_seed(cfg_.seed, 2));
  if (fusion_.variant == FusionVariant::WeightedSum) weights_ = SumWeights<Real>::identity(backbone.dim);
  optimizer_ = Optimizer(cfg_.optimizer, cfg_.eta2);
  best_e0_ = e0_.values;
  best_weights_ = weights_;

  positives_ = ds.pairs(Split::Train);
  if (positives_.empty()) throw DataError("no training interactions");
  train_items_ = ds.items_by_user(Split::Train);
  validation_items_ = ds.items_by_user(Split::Validation);
}

ParamList Stage2Trainer::params() {
  ParamList out{param_ref("e0", e0_.values, e0_.grad)};
  if (fusion_.variant == FusionVariant::WeightedSum)
    for (auto& p : weights_.params("fusion.")) out.push_back(p);
  return out;
}

std::size_t Stage2Trainer::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.value.size();
  return n;
}

bool Stage2Trainer::finished() const { return stopped_ || epoch_ >= cfg_.epochs; }

ScoringVectors<Real> Stage2Trainer::scoring(const MatrixXr& e0, const SumWeights<Real>* w) const {
  const auto G = model_.forward(e0);
  return fuse(fusion_.variant, G, aux_ ? &*aux_ : nullptr,
              fusion_.variant == FusionVariant::WeightedSum ? w : nullptr);
}

ScoringVectors<Real> Stage2Trainer::best_scoring() const { return scoring(best_e0_, &best_weights_); }

ScoringVectors<Real> Stage2Trainer::current_scoring() { return scoring(e0_.values, &weights_); }

std::optional<Real> Stage2Trainer::validate(const ScoringVectors<Real>& s) const {
  const auto recs = recommend(s.users, s.items, cfg_.select_n, validation_items_, {&train_items_});
  if (recs.empty()) return std::nullopt;
  return ranking_metrics(recs, validation_items_, {cfg_.select_n}).mean.front().ndcg;
}

const EpochRecord& Stage2Trainer::run_epoch() {
  if (finished()) throw OrderingError("training already finished");
  const auto start = Clock::now();
  const Index epoch = epoch_ + 1;

  std::vector<BprTriple> triples;
  triples.reserve(positives_.size());
  for (const auto& p : positives_) {
    const auto neg = sample_negatives(*ds_, p.user, 1, rng_);
    if (neg.items.empty()) continue;
    triples.push_back({p.user, p.item, neg.items.front()});
  }
  if (triples.empty()) throw DataError("no user has an unobserved item to sample");
  std::shuffle(triples.begin(), triples.end(), rng_);

  const auto ps = params();
  const auto* aux = aux_ ? &*aux_ : nullptr;
  auto* w = fusion_.variant == FusionVariant::WeightedSum ? &weights_ : nullptr;
  Real total = 0;
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t b = 0; b < triples.size(); b += bs) {
    const auto end = std::min(triples.size(), b + bs);
    zero_grads(ps);
    const auto loss = fused_objective_grad(model_, e0_, aux, w,
                                           std::span<const BprTriple>(triples.data() + b, end - b),
                                           backbone_cfg_.lambda_reg, fusion_);
    check_finite(loss.total(), "stage-2", epoch);
    total += loss.total();
    optimizer_.step(ps);
  }

  const auto metric = validate(current_scoring());
  epoch_ = epoch;
  if (!metric || !best_metric_ || *metric > *best_metric_) {
    if (metric) best_metric_ = metric;
    best_e0_ = e0_.values;
    best_weights_ = weights_;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (cfg_.patience > 0 && bad_epochs_ >= cfg_.patience) stopped_ = true;
  }
  log_.push_back({"graph", epoch, total / static_cast<Real>(triples.size()), metric,
                  seconds_since(start)});
  return log_.back();
}

void Stage2Trainer::fit() {
  while (!finished()) run_epoch();
}

namespace {

void put_weights(Checkpoint& ck, const std::string& prefix, const SumWeights<Real>& w) {
  if (w.w1.size() == 0) return;
  ck.put(prefix + "w1", w.w1);
  ck.put(prefix + "w2", w.w2);
  ck.put(prefix + "w3", w.w3);
  ck.put(prefix + "w4", w.w4);
}

void get_weights(const Checkpoint& ck, const std::string& prefix, SumWeights<Real>& w) {
  if (w.w1.size() == 0) return;
  w.w1 = ck.tensor(prefix + "w1");
  w.w2 = ck.tensor(prefix + "w2");
  w.w3 = ck.tensor(prefix + "w3");
  w.w4 = ck.tensor(prefix + "w4");
  w.check(w.w1.cols(), w.w2.cols());
  w.zero_grad();
}

std::string optional_real(const std::optional<Real>& v) { return v ? format_real(*v) : "-"; }

}  // namespace

Checkpoint Stage2Trainer::checkpoint() const {
  Checkpoint ck;
  ck.put("stage2.e0", e0_.values);
  ck.put("stage2.best_e0", best_e0_);
  put_weights(ck, "stage2.weights.", weights_);
  put_weights(ck, "stage2.best_weights.", best_weights_);
  const auto& m = optimizer_.first_moments();
  const auto& v = optimizer_.second_moments();
  for (std::size_t k = 0; k < m.size(); ++k) {
    ck.put("stage2.adam.m" + std::to_string(k), m[k]);
    ck.put("stage2.adam.v" + std::to_string(k), v[k]);
  }
  if (aux_) ck.put("aux.features", aux_->nodes);

  std::ostringstream rng;
  rng << rng_;
  ck.put_text("stage2.rng", rng.str());
  std::ostringstream state;
  state << "epoch=" << epoch_ << '\n'
        << "steps=" << optimizer_.steps() << '\n'
        << "moments=" << m.size() << '\n'
        << "stopped=" << (stopped_ ? 1 : 0) << '\n'
        << "bad_epochs=" << bad_epochs_ << '\n'
        << "best_metric=" << optional_real(best_metric_) << '\n'
        << "aux_users=" << (aux_ ? aux_->n_users : 0) << '\n';
  ck.put_text("stage2.state", state.str());
  ck.put_text("stage2.log", format_log(log_));
  return ck;
}

void Stage2Trainer::restore(const Checkpoint& ck) {
  std::map<std::string, std::string> state;
  {
    std::istringstream in(ck.text("stage2.state"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) state[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = state.find(key);
    if (it == state.end()) throw DataError("checkpoint state lacks '" + key + "'");
    return it->second;
  };

  const auto& e0 = ck.tensor("stage2.e0");
  if (e0.rows() != e0_.values.rows() || e0.cols() != e0_.values.cols())
    throw DimensionError("checkpoint embeddings do not match this dataset/configuration");
  e0_.values = e0;
  e0_.zero_grad();
  best_e0_ = ck.tensor("stage2.best_e0");
  get_weights(ck, "stage2.weights.", weights_);
  get_weights(ck, "stage2.best_weights.", best_weights_);

  const auto moments = std::stoul(field("moments"));
  auto& m = optimizer_.first_moments();
  auto& v = optimizer_.second_moments();
  m.clear();
  v.clear();
  for (std::size_t k = 0; k < moments; ++k) {
    m.push_back(ck.tensor("stage2.adam.m" + std::to_string(k)));
    v.push_back(ck.tensor("stage2.adam.v" + std::to_string(k)));
  }
  optimizer_.set_steps(std::stoll(field("steps")));
  if (ck.has("aux.features")) {
    const auto users = static_cast<Index>(std::stoll(field("aux_users")));
    aux_ = Features(ck.tensor("aux.features"), users);
  }

  std::istringstream rng(ck.text("stage2.rng"));
  rng >> rng_;
  if (!rng) throw DataError("checkpoint random-stream state is malformed");
  epoch_ = std::stoll(field("epoch"));
  stopped_ = field("stopped") == "1";
  bad_epochs_ = std::stoll(field("bad_epochs"));
  const auto& best = field("best_metric");
  best_metric_ = best == "-" ? std::nullopt : std::optional<Real>(std::stod(best));
  log_ = parse_log(ck.text("stage2.log"));
}

RankingReport evaluate_split(const InteractionDataset& ds, const ScoringVectors<Real>& s,
                             Split split, const std::vector<int>& ns, bool per_user,
                             Recommendations* recs_out) {
  if (split == Split::Train) throw ConfigError("evaluation split must be validation or test");
  const auto truth = ds.items_by_user(split);
  const auto train = ds.items_by_user(Split::Train);
  std::vector<const std::vector<std::vector<Index>>*> seen{&train};
  std::vector<std::vector<Index>> validation;
  if (split == Split::Test) {
    validation = ds.items_by_user(Split::Validation);
    seen.push_back(&validation);
  }
  const int depth = *std::max_element(ns.begin(), ns.end());
  auto recs = recommend(s.users, s.items, depth, truth, seen);
  auto report = ranking_metrics(recs, truth, ns, per_user);
  if (recs_out) *recs_out = std::move(recs);
  return report;
}

}  // namespace crossfuse
