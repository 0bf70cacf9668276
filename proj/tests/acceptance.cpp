// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "crossfuse/backbone.hpp"
#include "crossfuse/binary_io.hpp"
#include "crossfuse/checkpoint.hpp"
#include "crossfuse/cli.hpp"
#include "crossfuse/config.hpp"
#include "crossfuse/eval.hpp"
#include "crossfuse/gradcheck.hpp"
#include "crossfuse/graph.hpp"
#include "crossfuse/pipeline.hpp"
#include "crossfuse/synthetic.hpp"

using namespace crossfuse;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

InteractionDataset random_dataset(Index users, Index items, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(density);
  std::vector<Interaction> recs;
  for (Index u = 0; u < users; ++u)
    for (Index i = 0; i < items; ++i)
      if (edge(rng)) recs.push_back({u, i, 1.0, std::nullopt, Split::Train});
  if (recs.empty()) recs.push_back({0, 0, 1.0, std::nullopt, Split::Train});
  return InteractionDataset(users, items, std::move(recs));
}

// ------------------------------------------------------------------ 1, 2

void gradient_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checks = 0;
  double worst = 0;
  std::string worst_name = "-";
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (const auto& r : finite_difference_suite(seed)) {
      ++checks;
      ok = ok && r.pass;
      if (r.error > worst) {
        worst = r.error;
        worst_name = r.check + "/" + r.tensor;
      }
    }
  const double secs = seconds_since(t0);
  report(1, "gradients vs central differences", ok && secs < 60,
         std::to_string(checks) + " tensor checks over 20 seeds, worst relative error " +
             fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1fs", secs));

  double worst_abs = 0;
  ok = true;
  checks = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    for (const auto& r : analytic_suite(seed)) {
      ++checks;
      ok = ok && r.pass && r.error <= 1e-10;
      worst_abs = std::max(worst_abs, r.error);
    }
  report(2, "closed-form updating directions", ok,
         std::to_string(checks) + " checks, max abs difference " + fmt("%.2e", worst_abs));
}

// ------------------------------------------------------------------ 3

void propagation_criterion() {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<Index> side(2, 25);
  std::uniform_real_distribution<Real> unit(0.05, 1.0);
  double worst = 0;
  int trials = 0;
  for (int K = 1; K <= 4; ++K)
    for (int t = 0; t < 25; ++t) {
      const Index n = side(rng), m = side(rng);
      const auto ds = random_dataset(n, m, 0.2, rng);
      auto adj = std::make_shared<const SparseXr>(normalize_bipartite<Real>(ds));
      std::vector<Real> alphas(static_cast<std::size_t>(K + 1));
      for (auto& a : alphas) a = unit(rng);
      LightGcn<Real> model(adj, n, alphas);
      MatrixXr E0 = MatrixXr::Random(n + m, 5);
      const MatrixXr G = model.forward(E0).nodes;

      const MatrixXr D = MatrixXr(*adj);
      MatrixXr power = MatrixXr::Identity(n + m, n + m);
      MatrixXr oracle = MatrixXr::Zero(n + m, 5);
      for (int k = 0; k <= K; ++k) {
        oracle += alphas[static_cast<std::size_t>(k)] * power * E0;
        power = power * D;
      }
      worst = std::max(worst, (G - oracle).cwiseAbs().maxCoeff());
      ++trials;
    }
  report(3, "propagation matches dense power series", worst <= 1e-10,
         std::to_string(trials) + " random graphs (<= 50 nodes, K = 1..4), max abs difference " +
             fmt("%.2e", worst));
}

// ------------------------------------------------------------------ 4

void similarity_criterion() {
  std::mt19937_64 rng(44);
  bool ok = true;
  std::string detail;
  for (int trial = 0; trial < 5; ++trial) {
    auto ds = random_dataset(30, 40, 0.12, rng);
    const auto R = interaction_matrix<Real>(ds, true);
    for (Axis axis : {Axis::Rows, Axis::Columns}) {
      const Index nodes = axis == Axis::Rows ? R.rows() : R.cols();
      std::vector<Index> counts;
      for (double eps : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const auto S = build_similarity_graph<Real>(R, axis, eps);
        const MatrixXr D = MatrixXr(S);
        if (D != D.transpose()) ok = false;
        for (Index a = 0; a < nodes; ++a) {
          const bool active = axis == Axis::Rows ? ds.user_degree(a) > 0 : ds.item_degree(a) > 0;
          if (active && D(a, a) != 1.0) ok = false;
          for (Index b = 0; b < nodes; ++b)
            if (a != b && D(a, b) != 0 && (D(a, b) < eps || D(a, b) > 1)) ok = false;
        }
        counts.push_back(S.nonZeros());
      }
      for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > counts[k - 1]) ok = false;
      if (counts.front() <= counts.back()) ok = false;
      if (trial == 0 && axis == Axis::Rows) {
        detail = "user graph entries at eps 0.1..0.9:";
        for (auto c : counts) detail += " " + std::to_string(c);
      }
    }
  }
  report(4, "similarity graph contract", ok, detail + " (5 random matrices, both axes)");
}

// ------------------------------------------------------------------ 5, 6

struct SeedResult {
  double none = 0, cross = 0, concat = 0, plain = 0;
  double kl_none = 0, kl_cross = 0;
  Real lambda1 = 0, lambda2 = 0;
};

Real best_validation(const std::vector<EpochRecord>& log) {
  Real best = -1;
  for (const auto& e : log)
    if (e.validation_ndcg) best = std::max(best, *e.validation_ndcg);
  return best;
}

void fusion_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig base;
  apply_preset(base, "ml1m-gin");
  // Desk-scale schedule: ~2.4k training pairs need small stage-2 batches to
  // take enough optimizer steps; stage 1 keeps the default batch.
  set_config_value(base, "train.batch_size", "128");
  set_config_value(base, "train.aux_batch_size", "1024");
  set_config_value(base, "fusion.graph_loss", "mse");
  // Fusion weights picked on validation from the two reported best settings.
  const std::vector<std::pair<Real, Real>> grid{{0.05, 0.001}, {0.05, 0.05}, {0.1, 0.001}, {0.1, 0.05}};

  std::vector<SeedResult> results;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig sc;
    sc.seed = seed;
    const auto data = generate_synthetic(sc);
    ModelConfig mc = base.model;
    mc.train.seed = seed;
    const auto graphs = build_graphs(data.dataset, mc);
    auto aux_model = make_aux_model(graphs, data.user_features.values, data.item_features.values, mc);
    const std::optional<Features> aux = train_stage1(data.dataset, aux_model, mc.train).aux;

    const auto histories = data.dataset.items_by_user(Split::Train);
    const EvalConfig ev;
    auto run = [&](FusionVariant v, Real l1, Real l2) {
      ModelConfig m = mc;
      m.fusion.variant = v;
      m.fusion.lambda1 = l1;
      m.fusion.lambda2 = l2;
      return train_and_evaluate(data.dataset, graphs, aux, m, {10}, ev.kl_list_length);
    };
    auto kl = [&](const RunOutcome& o) {
      return category_kl(histories, o.recommendations, data.item_categories, ev.kl_top_categories).kl;
    };

    SeedResult r;
    const auto none = run(FusionVariant::None, 0, 0);
    r.none = none.test.value("ndcg", 10);
    r.kl_none = kl(none);
    r.concat = run(FusionVariant::Concat, 0, 0).test.value("ndcg", 10);
    r.plain = run(FusionVariant::PlainSum, 0, 0).test.value("ndcg", 10);
    Real best = -1;
    for (const auto& [l1, l2] : grid) {
      const auto o = run(FusionVariant::Cross, l1, l2);
      const Real v = best_validation(o.log);
      if (v > best) {
        best = v;
        r.cross = o.test.value("ndcg", 10);
        r.kl_cross = kl(o);
        r.lambda1 = l1;
        r.lambda2 = l2;
      }
    }
    std::printf("  seed %llu  ndcg@10 none %.4f cross %.4f (l1 %g, l2 %g) concat %.4f plain-sum %.4f"
                "  kl none %.4f cross %.4f\n",
                static_cast<unsigned long long>(seed), r.none, r.cross, r.lambda1, r.lambda2, r.concat,
                r.plain, r.kl_none, r.kl_cross);
    std::fflush(stdout);
    results.push_back(r);
  }
  const double secs = seconds_since(t0);

  int beat_none = 0, beat_simple = 0;
  double kl_none = 0, kl_cross = 0;
  for (const auto& r : results) {
    beat_none += r.cross >= r.none;
    beat_simple += r.cross >= r.concat && r.cross >= r.plain;
    kl_none += r.kl_none / static_cast<double>(results.size());
    kl_cross += r.kl_cross / static_cast<double>(results.size());
  }
  report(5, "cross fusion benefit on synthetic data", beat_none >= 4 && beat_simple >= 3 && secs < 300,
         "cross >= plain backbone on " + std::to_string(beat_none) + "/5 seeds, >= concat and plain-sum on " +
             std::to_string(beat_simple) + "/5, " + fmt("%.0fs", secs));
  report(6, "category KL direction", kl_cross <= kl_none,
         "mean KL fused " + fmt("%.5f", kl_cross) + " vs backbone " + fmt("%.5f", kl_none));
}

// ------------------------------------------------------------------ 7

void metric_criterion() {
  bool ok = true;
  std::string detail;
  {
    Recommendations recs{{0, {5, 6, 7, 8, 9}}};
    std::vector<std::vector<Index>> truth{{7}};
    const auto rep = ranking_metrics(recs, truth, {5});
    ok = ok && std::abs(rep.value("ndcg", 5) - 0.5) <= 1e-12;
    detail += "ndcg@5 " + format_real(rep.value("ndcg", 5));
  }
  {
    Recommendations recs{{0, {1, 2, 3}}};
    std::vector<std::vector<Index>> truth{{2, 9}};
    const auto rep = ranking_metrics(recs, truth, {3});
    ok = ok && std::abs(rep.value("mrr", 3) - 0.5) <= 1e-12;
    detail += ", mrr " + format_real(rep.value("mrr", 3));
  }
  {
    Recommendations recs{{0, {0, 1, 2, 3, 4}}};
    std::vector<std::vector<Index>> truth{{0, 1, 2, 3, 4, 5}};
    const auto rep = ranking_metrics(recs, truth, {5});
    ok = ok && rep.value("ndcg", 5) == 1.0 && rep.value("mrr", 5) == 1.0;
  }
  {
    // history: three items of category 0, one of category 1; recommended:
    // one of each.
    std::vector<std::vector<Index>> cats{{0}, {0}, {0}, {1}, {0}, {1}};
    std::vector<std::vector<Index>> hist{{0, 1, 2, 3}};
    Recommendations recs{{0, {4, 5}}};
    const auto kl = category_kl(hist, recs, cats, 2);
    const double expected = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
    ok = ok && std::abs(kl.kl - expected) <= 1e-12 && std::abs(kl.kl - 0.1308) < 5e-5;
    detail += ", two-category kl " + format_real(kl.kl);
  }
  report(7, "metric unit examples", ok, detail);
}

// ------------------------------------------------------------------ 8

void reduction_criterion() {
  SyntheticConfig sc;
  sc.users = 60;
  sc.items = 80;
  sc.seed = 8;
  const auto data = generate_synthetic(sc);
  ModelConfig mc;
  mc.train.epochs = 12;
  mc.train.aux_epochs = 4;
  mc.train.batch_size = 64;
  mc.aux.hidden = {16};
  mc.train.seed = 8;
  const auto graphs = build_graphs(data.dataset, mc);
  auto aux_model = make_aux_model(graphs, data.user_features.values, data.item_features.values, mc);
  const std::optional<Features> aux = train_stage1(data.dataset, aux_model, mc.train).aux;

  ModelConfig zero = mc;
  zero.fusion.variant = FusionVariant::Cross;
  zero.fusion.lambda1 = 0;
  zero.fusion.lambda2 = 0;
  ModelConfig plain = mc;
  plain.fusion.variant = FusionVariant::None;
  const auto a = train_and_evaluate(data.dataset, graphs, aux, zero, {5, 10});
  const auto b = train_and_evaluate(data.dataset, graphs, std::nullopt, plain, {5, 10});
  bool same_metrics = a.test.mean.size() == b.test.mean.size();
  for (std::size_t k = 0; same_metrics && k < a.test.mean.size(); ++k) {
    const auto& x = a.test.mean[k];
    const auto& y = b.test.mean[k];
    same_metrics = x.precision == y.precision && x.recall == y.recall && x.f1 == y.f1 &&
                   x.mrr == y.mrr && x.ndcg == y.ndcg;
  }
  same_metrics = same_metrics && a.scoring.users == b.scoring.users && a.scoring.items == b.scoring.items;

  // K = 0 auxiliary GCN: the tower output is the encoder output.
  ModelConfig k0 = mc;
  k0.aux.gcn_layers = 0;
  auto flat = make_aux_model(graphs, data.user_features.values, data.item_features.values, k0);
  const Features A = flat.forward(Mode::Eval);
  const MatrixXr enc_u = flat.user_tower.encoder.forward(data.user_features.values, Mode::Eval);
  const MatrixXr enc_i = flat.item_tower.encoder.forward(data.item_features.values, Mode::Eval);
  const bool k0_identity = A.users() == enc_u && A.items() == enc_i;

  // alpha = (1, 0, ..., 0): graph features are E0, so rankings are MF rankings.
  std::vector<Real> alphas{1, 0, 0, 0};
  LightGcn<Real> model(graphs.adjacency, data.dataset.n_users(), alphas);
  const auto E0 = init_embeddings(data.dataset.n_users() + data.dataset.n_items(), 8, 8);
  const auto G = model.forward(E0.values);
  const MatrixXr P = E0.values.topRows(data.dataset.n_users());
  const MatrixXr Q = E0.values.bottomRows(data.dataset.n_items());
  const MatrixXr GU = G.users(), GI = G.items();
  bool mf_same = true;
  for (Index u = 0; u < data.dataset.n_users(); ++u)
    mf_same = mf_same && rank_topn(GU, GI, u, 20) == rank_topn(P, Q, u, 20);

  report(8, "reduction identities", same_metrics && k0_identity && mf_same,
         std::string("zero-weight cross == plain backbone: ") + (same_metrics ? "yes" : "no") +
             ", K=0 aux GCN == encoder: " + (k0_identity ? "yes" : "no") +
             ", alpha=(1,0,..) ranking == MF ranking: " + (mf_same ? "yes" : "no"));
}

// ------------------------------------------------------------------ 9

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int rc = run_command(args, out, err);
  if (rc != 0) std::printf("  crossfuse %s -> %d: %s", args.front().c_str(), rc, err.str().c_str());
  return rc;
}

void persistence_criterion() {
  const fs::path root = fs::temp_directory_path() / ("crossfuse-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  SyntheticConfig sc;
  sc.users = 60;
  sc.items = 80;
  sc.seed = 9;
  write_synthetic(generate_synthetic(sc), (root / "data").string());
  const std::string cfg_path = (root / "run.cfg").string();
  {
    std::ostringstream cfg;
    cfg << "preset = ml1m-lightgcn\n[paths]\n"
        << "interactions = " << (root / "data" / "interactions.csv").string() << "\n"
        << "user_attributes = " << (root / "data" / "users.csv").string() << "\n"
        << "item_attributes = " << (root / "data" / "items.csv").string() << "\n"
        << "item_categories = " << (root / "data" / "categories.txt").string() << "\n"
        << "output = " << (root / "run").string() << "\n"
        << "[auxnet]\nhidden = 16\n[train]\nepochs = 10\naux_epochs = 4\nbatch_size = 64\n";
    io::write_file(cfg_path, cfg.str());
  }
  const std::vector<std::string> files{"metrics.tsv", "metrics.json", "manifest-evaluate.json"};
  auto pipeline = [&]() -> std::vector<std::string> {
    fs::remove_all(root / "run");
    for (const char* cmd : {"prepare", "train-aux", "train", "evaluate"})
      if (cli({cmd, "--config", cfg_path}) != 0) return {};
    std::vector<std::string> bytes;
    for (const auto& f : files) bytes.push_back(io::read_file((root / "run" / f).string()));
    return bytes;
  };
  const auto first = pipeline();
  const auto second = pipeline();
  const bool deterministic = !first.empty() && first == second;

  // Resume: 5 + 5 epochs through a checkpoint file against 10 straight.
  SyntheticConfig sc2 = sc;
  sc2.seed = 10;
  const auto data = generate_synthetic(sc2);
  ModelConfig mc;
  mc.aux.hidden = {16};
  mc.train.epochs = 10;
  mc.train.aux_epochs = 3;
  mc.train.batch_size = 64;
  mc.train.patience = 0;
  mc.train.seed = 10;
  const auto graphs = build_graphs(data.dataset, mc);
  auto aux_model = make_aux_model(graphs, data.user_features.values, data.item_features.values, mc);
  const std::optional<Features> aux = train_stage1(data.dataset, aux_model, mc.train).aux;
  auto make = [&] {
    return Stage2Trainer(data.dataset, graphs.adjacency, mc.backbone, mc.train, mc.fusion, aux);
  };
  auto straight = make();
  straight.fit();
  auto part = make();
  for (int e = 0; e < 5; ++e) part.run_epoch();
  const std::string ck = (root / "mid.ckpt").string();
  save_checkpoint(part.checkpoint(), ck);
  auto resumed = make();
  resumed.restore(load_checkpoint(ck));
  resumed.fit();
  const auto m1 = evaluate_split(data.dataset, straight.best_scoring(), Split::Test, {10, 20});
  const auto m2 = evaluate_split(data.dataset, resumed.best_scoring(), Split::Test, {10, 20});
  bool resume_ok = m1.mean.size() == m2.mean.size() && resumed.epoch() == straight.epoch();
  for (std::size_t k = 0; resume_ok && k < m1.mean.size(); ++k)
    resume_ok = m1.mean[k].ndcg == m2.mean[k].ndcg && m1.mean[k].mrr == m2.mean[k].mrr &&
                m1.mean[k].f1 == m2.mean[k].f1;
  resume_ok = resume_ok && straight.embeddings().values == resumed.embeddings().values;
  fs::remove_all(root);

  report(9, "determinism and checkpoint resume", deterministic && resume_ok,
         std::string("repeated CLI pipeline byte-identical: ") + (deterministic ? "yes" : "no") +
             ", resume at epoch 5 of 10 matches straight run: " + (resume_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  auto guarded = [](int id, const char* name, void (*fn)()) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, name, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, "gradients vs central differences", gradient_criteria);
  guarded(3, "propagation matches dense power series", propagation_criterion);
  guarded(4, "similarity graph contract", similarity_criterion);
  guarded(5, "cross fusion benefit on synthetic data", fusion_criteria);
  guarded(7, "metric unit examples", metric_criterion);
  guarded(8, "reduction identities", reduction_criterion);
  guarded(9, "determinism and checkpoint resume", persistence_criterion);
  std::printf("%d criteria failed, %.0fs\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
