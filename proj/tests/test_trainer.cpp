#include <doctest.h>

#include "crossfuse/checkpoint.hpp"
#include "crossfuse/pipeline.hpp"
#include "crossfuse/synthetic.hpp"
#include "test_util.hpp"

using namespace crossfuse;

namespace {

SyntheticData tiny_data(std::uint64_t seed) {
  SyntheticConfig sc;
  sc.users = 20;
  sc.items = 30;
  sc.categories = 3;
  sc.min_interactions = 4;
  sc.max_interactions = 10;
  sc.seed = seed;
  return generate_synthetic(sc);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.backbone.dim = 8;
  cfg.aux.dim = 8;
  cfg.aux.hidden = {16};
  cfg.aux.gcn_layers = 1;
  cfg.train.epochs = 6;
  cfg.train.batch_size = 32;
  cfg.train.eta1 = 0.01;
  cfg.train.eta2 = 0.01;
  cfg.train.patience = 0;
  cfg.train.seed = 17;
  return cfg;
}

struct Fixture {
  SyntheticData data = tiny_data(1);
  ModelConfig cfg = tiny_model();
  Graphs graphs = build_graphs(data.dataset, cfg);

  AuxModel aux_model() const {
    return make_aux_model(graphs, data.user_features.values, data.item_features.values, cfg);
  }
};

}  // namespace

TEST_CASE("derived seeds are distinct and stable") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("stage-1 examples pad implicit positives with negatives") {
  Fixture fx;
  Rng rng(3);
  const auto ex = stage1_examples(fx.data.dataset, rng);
  const auto positives = fx.data.dataset.count(Split::Train);
  CHECK(ex.size() == 2 * positives);
  std::size_t zeros = 0;
  for (const auto& e : ex) {
    if (e.rating == 0) {
      ++zeros;
      CHECK_FALSE(fx.data.dataset.has_train_pair(e.user, e.item));
    }
  }
  CHECK(zeros == positives);
}

TEST_CASE("stage 1 logs one record per epoch, descends and is deterministic") {
  Fixture fx;
  fx.cfg.train.aux_epochs = 3;
  auto m1 = fx.aux_model();
  const auto r1 = train_stage1(fx.data.dataset, m1, fx.cfg.train);
  REQUIRE(r1.log.size() == 3);
  for (const auto& rec : r1.log) CHECK(rec.stage == "aux");
  auto m2 = fx.aux_model();
  const auto r2 = train_stage1(fx.data.dataset, m2, fx.cfg.train);
  CHECK(r1.aux.nodes == r2.aux.nodes);

  fx.cfg.train.aux_epochs = 30;
  auto m3 = fx.aux_model();
  const auto r3 = train_stage1(fx.data.dataset, m3, fx.cfg.train);
  CHECK(r3.log.back().loss < r3.log.front().loss);
}

TEST_CASE("stage 2 leaves the auxiliary features untouched") {
  Fixture fx;
  fx.cfg.train.aux_epochs = 2;
  auto m = fx.aux_model();
  const auto aux = train_stage1(fx.data.dataset, m, fx.cfg.train).aux;
  const MatrixXr before = aux.nodes;
  Stage2Trainer t(fx.data.dataset, fx.graphs.adjacency, fx.cfg.backbone, fx.cfg.train,
                  fx.cfg.fusion, aux);
  t.fit();
  CHECK(t.aux()->nodes == before);
  CHECK(t.epoch() == fx.cfg.train.epochs);
  CHECK(t.log().size() == static_cast<std::size_t>(fx.cfg.train.epochs));
}

TEST_CASE("stage 2 refuses to fuse without auxiliary features") {
  Fixture fx;
  CHECK_THROWS_AS(Stage2Trainer(fx.data.dataset, fx.graphs.adjacency, fx.cfg.backbone,
                                fx.cfg.train, fx.cfg.fusion, std::nullopt),
                  OrderingError);
}

TEST_CASE("zero cross weights reproduce the plain backbone run") {
  Fixture fx;
  fx.cfg.train.aux_epochs = 2;
  auto m = fx.aux_model();
  const auto aux = train_stage1(fx.data.dataset, m, fx.cfg.train).aux;
  ModelConfig cross = fx.cfg;
  cross.fusion.variant = FusionVariant::Cross;
  cross.fusion.lambda1 = cross.fusion.lambda2 = 0;
  ModelConfig none = fx.cfg;
  none.fusion.variant = FusionVariant::None;
  const auto a = train_and_evaluate(fx.data.dataset, fx.graphs, aux, cross, {5, 10});
  const auto b = train_and_evaluate(fx.data.dataset, fx.graphs, std::nullopt, none, {5, 10});
  CHECK(a.scoring.users == b.scoring.users);
  CHECK(a.scoring.items == b.scoring.items);
  for (std::size_t k = 0; k < a.test.mean.size(); ++k) {
    CHECK(a.test.mean[k].ndcg == b.test.mean[k].ndcg);
    CHECK(a.test.mean[k].recall == b.test.mean[k].recall);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  testutil::TempDir dir("ckpt");
  Checkpoint ck;
  MatrixXr M(2, 3);
  M << 1.0 / 3, -2, 1e-300, 4, 5, 6;
  ck.put("m", M);
  ck.put_text("note", "hello");
  save_checkpoint(ck, dir.file("a.ckpt"));
  const auto back = load_checkpoint(dir.file("a.ckpt"));
  CHECK(back.tensor("m") == M);
  CHECK(back.text("note") == "hello");
  CHECK_THROWS_AS(back.tensor("missing"), DataError);

  const auto v2 = serialize_checkpoint(ck, kCheckpointVersion + 1);
  CHECK_THROWS_AS(parse_checkpoint(v2, "bumped"), VersionMismatch);

  auto bytes = serialize_checkpoint(ck);
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(parse_checkpoint(bytes, "flipped"), ChecksumError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, 10), "truncated"), Error);
}

TEST_CASE("resumed stage 2 equals an uninterrupted run") {
  Fixture fx;
  fx.cfg.fusion.variant = FusionVariant::None;
  fx.cfg.train.epochs = 6;
  Stage2Trainer straight(fx.data.dataset, fx.graphs.adjacency, fx.cfg.backbone, fx.cfg.train,
                         fx.cfg.fusion, std::nullopt);
  straight.fit();

  Stage2Trainer first(fx.data.dataset, fx.graphs.adjacency, fx.cfg.backbone, fx.cfg.train,
                      fx.cfg.fusion, std::nullopt);
  for (int k = 0; k < 3; ++k) first.run_epoch();
  const auto bytes = serialize_checkpoint(first.checkpoint());
  Stage2Trainer second(fx.data.dataset, fx.graphs.adjacency, fx.cfg.backbone, fx.cfg.train,
                       fx.cfg.fusion, std::nullopt);
  second.restore(parse_checkpoint(bytes, "resume"));
  second.fit();
  CHECK(second.epoch() == straight.epoch());
  CHECK(second.embeddings().values == straight.embeddings().values);
  CHECK(second.best_metric() == straight.best_metric());
}

TEST_CASE("training log text round trip") {
  std::vector<EpochRecord> log{{"aux", 1, 12.5, std::nullopt, 0.0},
                               {"graph", 1, 0.25, 0.125, 0.0}};
  const auto back = parse_log(format_log(log));
  REQUIRE(back.size() == 2);
  CHECK(back[0].stage == "aux");
  CHECK_FALSE(back[0].validation_ndcg.has_value());
  CHECK(back[1].loss == 0.25);
  CHECK(*back[1].validation_ndcg == 0.125);
}
