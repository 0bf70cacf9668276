#include "crossfuse/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crossfuse/binary_io.hpp"
#include "crossfuse/checkpoint.hpp"
#include "crossfuse/config.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/eval.hpp"
#include "crossfuse/gradcheck.hpp"
#include "crossfuse/pipeline.hpp"

#ifndef CROSSFUSE_VERSION
#define CROSSFUSE_VERSION "0.0.0"
#endif

namespace crossfuse {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Artifact names inside the output directory.
constexpr const char* kPrepared = "prepared.tsv";
constexpr const char* kPreparedMeta = "prepared.json";
constexpr const char* kUserMap = "users.map";
constexpr const char* kItemMap = "items.map";
constexpr const char* kUserFeatures = "user_features.bin";
constexpr const char* kItemFeatures = "item_features.bin";
constexpr const char* kAuxUsers = "aux_users.bin";
constexpr const char* kAuxItems = "aux_items.bin";
constexpr const char* kAuxModel = "aux_model.ckpt";
constexpr const char* kCheckpoint = "checkpoint.ckpt";

struct Options {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::string output;
  bool resume = false;
  bool per_user = false;
  std::uint64_t seed = 7;
  int seeds = 1;
  bool seed_given = false;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + o.config);
    std::ostringstream ss;
    if (!o.preset.empty()) ss << "preset = " << o.preset << '\n';
    ss << in.rdbuf();
    cfg = parse_config(ss.str(), o.config);
  } else if (!o.preset.empty()) {
    apply_preset(cfg, o.preset);
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (const char* env = std::getenv(kOutputEnv); env && *env) cfg.paths.output = env;
  if (!o.output.empty()) cfg.paths.output = o.output;
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required config key '" + key + "'");
}

std::string in_dir(const RunConfig& cfg, const char* name) {
  return (fs::path(cfg.paths.output) / name).string();
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

class Manifest {
 public:
  Manifest(const std::string& command, const RunConfig& cfg) {
    doc_["tool"] = "crossfuse";
    doc_["version"] = CROSSFUSE_VERSION;
    doc_["command"] = command;
    doc_["seed"] = cfg.model.train.seed;
    doc_["config"] = config_snapshot(cfg);
    doc_["inputs"] = json::object();
    doc_["notes"] = json::array();
  }
  void input(const std::string& name, const std::string& path) {
    if (path.empty() || !fs::exists(path)) return;
    doc_["inputs"][name] = {{"path", path}, {"crc32", hex32(io::crc32(io::read_file(path)))}};
  }
  void note(const std::string& text) { doc_["notes"].push_back(text); }
  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

void write_text(const std::string& path, const std::string& text) {
  io::write_file(path, text);
}

// ---------------------------------------------------------------- workspace

struct Workspace {
  InteractionDataset ds;
  MatrixXr user_features;
  MatrixXr item_features;
  Graphs graphs;
};

Workspace load_workspace(const RunConfig& cfg) {
  const auto meta_path = in_dir(cfg, kPreparedMeta);
  if (!fs::exists(meta_path))
    throw OrderingError("no prepared dataset in " + cfg.paths.output + " (run prepare first)");
  const auto meta = json::parse(io::read_file(meta_path));
  Workspace ws;
  ws.ds = load_prepared(in_dir(cfg, kPrepared), meta.at("users").get<Index>(), meta.at("items").get<Index>());
  ws.ds.user_ids = IdMap::load(in_dir(cfg, kUserMap));
  ws.ds.item_ids = IdMap::load(in_dir(cfg, kItemMap));
  ws.user_features = io::load_dense(in_dir(cfg, kUserFeatures));
  ws.item_features = io::load_dense(in_dir(cfg, kItemFeatures));
  ws.graphs = build_graphs(ws.ds, cfg.model);
  return ws;
}

std::optional<Features> load_aux(const RunConfig& cfg, const InteractionDataset& ds, bool required) {
  const std::string users = cfg.paths.aux_users.empty() ? in_dir(cfg, kAuxUsers) : cfg.paths.aux_users;
  const std::string items = cfg.paths.aux_items.empty() ? in_dir(cfg, kAuxItems) : cfg.paths.aux_items;
  if (!fs::exists(users) || !fs::exists(items)) {
    if (required)
      throw OrderingError("stage-1 auxiliary features not found (" + users + ", " + items +
                          "); run train-aux or set paths.aux_users / paths.aux_items");
    return std::nullopt;
  }
  const MatrixXr au = io::load_dense(users);
  const MatrixXr ai = io::load_dense(items);
  if (au.rows() != ds.n_users() || ai.rows() != ds.n_items() || au.cols() != ai.cols())
    throw DimensionError("auxiliary matrices are " + std::to_string(au.rows()) + "x" +
                         std::to_string(au.cols()) + " and " + std::to_string(ai.rows()) + "x" +
                         std::to_string(ai.cols()) + " for " + std::to_string(ds.n_users()) +
                         " users and " + std::to_string(ds.n_items()) + " items");
  MatrixXr stacked(au.rows() + ai.rows(), au.cols());
  stacked << au, ai;
  return Features(std::move(stacked), au.rows());
}

std::vector<std::vector<Index>> load_categories(const RunConfig& cfg, const InteractionDataset& ds) {
  if (cfg.paths.item_categories.empty()) return {};
  return load_item_categories(cfg.paths.item_categories, ds.item_ids);
}

// ---------------------------------------------------------------- commands

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  require(cfg.paths.interactions, "paths.interactions");
  fs::create_directories(cfg.paths.output);
  LoadReport load_report;
  const auto raw = load_interactions(cfg.paths.interactions, cfg.schema, &load_report);
  SplitReport split_report;
  const auto ds = split_dataset(raw, cfg.ratios, cfg.model.train.seed, &split_report);

  auto encode = [&](const std::string& path, const IdMap& ids, Index count) {
    if (path.empty()) return MatrixXr(MatrixXr::Ones(count, 1));
    return encode_auxiliary(path, {}, ids, count).values;
  };
  const MatrixXr uf = encode(cfg.paths.user_attributes, ds.user_ids, ds.n_users());
  const MatrixXr itf = encode(cfg.paths.item_attributes, ds.item_ids, ds.n_items());
  const auto graphs = build_graphs(ds, cfg.model);

  save_prepared(in_dir(cfg, kPrepared), ds);
  ds.user_ids.save(in_dir(cfg, kUserMap));
  ds.item_ids.save(in_dir(cfg, kItemMap));
  io::save_dense(in_dir(cfg, kUserFeatures), uf);
  io::save_dense(in_dir(cfg, kItemFeatures), itf);
  save_sparse(in_dir(cfg, "adjacency.csr"), *graphs.adjacency);
  save_sparse(in_dir(cfg, "user_similarity.csr"), *graphs.user_similarity);
  save_sparse(in_dir(cfg, "item_similarity.csr"), *graphs.item_similarity);

  json meta;
  meta["users"] = ds.n_users();
  meta["items"] = ds.n_items();
  meta["train"] = ds.count(Split::Train);
  meta["validation"] = ds.count(Split::Validation);
  meta["test"] = ds.count(Split::Test);
  meta["duplicate_lines"] = load_report.duplicates;
  meta["short_users"] = split_report.short_users.size();
  meta["isolated_user_similarity"] = graphs.user_report.isolated.size();
  meta["isolated_item_similarity"] = graphs.item_report.isolated.size();
  meta["user_similarity_entries"] = graphs.user_similarity->nonZeros();
  meta["item_similarity_entries"] = graphs.item_similarity->nonZeros();
  meta["user_feature_width"] = uf.cols();
  meta["item_feature_width"] = itf.cols();
  write_text(in_dir(cfg, kPreparedMeta), meta.dump(2) + "\n");

  Manifest m("prepare", cfg);
  m.input("interactions", cfg.paths.interactions);
  m.input("user_attributes", cfg.paths.user_attributes);
  m.input("item_attributes", cfg.paths.item_attributes);
  if (cfg.paths.user_attributes.empty() || cfg.paths.item_attributes.empty())
    m.note("missing attribute file: constant single-column features used for that side");
  m.write(in_dir(cfg, "manifest-prepare.json"));
  out << "prepared " << ds.n_users() << " users, " << ds.n_items() << " items (" << ds.count(Split::Train)
      << " train / " << ds.count(Split::Validation) << " validation / " << ds.count(Split::Test)
      << " test) in " << cfg.paths.output << '\n';
  if (!split_report.short_users.empty())
    out << split_report.short_users.size() << " users had too few records to split and stay in train\n";
  return 0;
}

void put_params(Checkpoint& ck, const std::string& prefix, const ParamList& params) {
  for (const auto& p : params)
    ck.put(prefix + p.name, Eigen::Map<const MatrixXr>(p.value.data(), p.rows, p.cols));
}

int cmd_train_aux(const RunConfig& cfg, std::ostream& out) {
  auto ws = load_workspace(cfg);
  AuxModel model = make_aux_model(ws.graphs, ws.user_features, ws.item_features, cfg.model);
  const auto result = train_stage1(ws.ds, model, cfg.model.train);
  io::save_dense(in_dir(cfg, kAuxUsers), result.aux.users());
  io::save_dense(in_dir(cfg, kAuxItems), result.aux.items());
  Checkpoint ck;
  ck.put_text("config", config_snapshot(cfg));
  put_params(ck, "auxnet.", model.params());
  put_params(ck, "auxnet.", model.buffers());
  save_checkpoint(ck, in_dir(cfg, kAuxModel));
  write_text(in_dir(cfg, "aux_log.tsv"), format_log(result.log));

  Manifest m("train-aux", cfg);
  m.input("prepared", in_dir(cfg, kPrepared));
  m.input("user_features", in_dir(cfg, kUserFeatures));
  m.input("item_features", in_dir(cfg, kItemFeatures));
  if (ws.ds.implicit())
    m.note("implicit feedback: stage-1 batches padded 1:1 with sampled r=0 negatives");
  m.write(in_dir(cfg, "manifest-train-aux.json"));
  out << "stage 1: " << result.log.size() << " epochs, final loss "
      << format_real(result.log.back().loss) << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const Options& o, std::ostream& out) {
  auto ws = load_workspace(cfg);
  const bool needs_aux = cfg.model.fusion.variant != FusionVariant::None;
  auto aux = load_aux(cfg, ws.ds, needs_aux);
  if (!needs_aux) aux.reset();
  Stage2Trainer trainer(ws.ds, ws.graphs.adjacency, cfg.model.backbone, cfg.model.train,
                        cfg.model.fusion, aux);
  const auto ck_path = in_dir(cfg, kCheckpoint);
  if (o.resume) {
    if (!fs::exists(ck_path)) throw OrderingError("--resume: no checkpoint at " + ck_path);
    trainer.restore(load_checkpoint(ck_path));
    out << "resumed at epoch " << trainer.epoch() << '\n';
  }
  std::optional<Checkpoint> aux_ck;
  if (fs::exists(in_dir(cfg, kAuxModel))) aux_ck = load_checkpoint(in_dir(cfg, kAuxModel));
  auto save = [&] {
    Checkpoint ck = trainer.checkpoint();
    ck.put_text("config", config_snapshot(cfg));
    if (aux_ck)
      for (const auto& [name, t] : aux_ck->tensors()) ck.put(name, t);
    save_checkpoint(ck, ck_path);
  };
  while (!trainer.finished()) {
    const auto& rec = trainer.run_epoch();
    if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0) save();
  }
  save();
  write_text(in_dir(cfg, "train_log.tsv"), format_log(trainer.log()));

  Manifest m("train", cfg);
  m.input("prepared", in_dir(cfg, kPrepared));
  if (aux) {
    m.input("aux_users", cfg.paths.aux_users.empty() ? in_dir(cfg, kAuxUsers) : cfg.paths.aux_users);
    m.input("aux_items", cfg.paths.aux_items.empty() ? in_dir(cfg, kAuxItems) : cfg.paths.aux_items);
  }
  m.write(in_dir(cfg, "manifest-train.json"));
  out << "stage 2: " << trainer.epoch() << " epochs" << (trainer.stopped_early() ? " (early stop)" : "");
  if (trainer.best_metric())
    out << ", best validation ndcg@" << cfg.model.train.select_n << " " << format_real(*trainer.best_metric());
  out << '\n';
  return 0;
}

/// Rebuilds the trainer recorded in a checkpoint.
Stage2Trainer trainer_from_checkpoint(const Checkpoint& ck, const InteractionDataset& ds,
                                      const Graphs& graphs, RunConfig& recorded) {
  recorded = parse_config(ck.text("config"), "checkpoint config");
  std::optional<Features> aux;
  if (ck.has("aux.features")) {
    const auto& t = ck.tensor("aux.features");
    aux = Features(t, ds.n_users());
  }
  Stage2Trainer trainer(ds, graphs.adjacency, recorded.model.backbone, recorded.model.train,
                        recorded.model.fusion, std::move(aux));
  trainer.restore(ck);
  return trainer;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  auto ws = load_workspace(cfg);
  const auto ck_path = in_dir(cfg, kCheckpoint);
  if (!fs::exists(ck_path)) throw OrderingError("no checkpoint at " + ck_path + " (run train first)");
  const auto ck = load_checkpoint(ck_path);
  RunConfig recorded;
  auto trainer = trainer_from_checkpoint(ck, ws.ds, ws.graphs, recorded);
  const auto scoring = trainer.best_scoring();
  Recommendations recs;
  const auto report = evaluate_split(ws.ds, scoring, Split::Test, cfg.eval.cutoffs,
                                     cfg.eval.per_user, &recs);
  std::optional<KlReport> kl;
  if (const auto cats = load_categories(cfg, ws.ds); !cats.empty()) {
    const auto truth = ws.ds.items_by_user(Split::Test);
    const auto train = ws.ds.items_by_user(Split::Train);
    const auto validation = ws.ds.items_by_user(Split::Validation);
    const auto lists = recommend(scoring.users, scoring.items, cfg.eval.kl_list_length, truth, {&train, &validation});
    kl = category_kl(train, lists, cats, cfg.eval.kl_top_categories);
  }
  write_report_tsv(in_dir(cfg, "metrics.tsv"), report, kl ? &*kl : nullptr);
  write_report_json(in_dir(cfg, "metrics.json"), report, kl ? &*kl : nullptr);
  if (cfg.eval.per_user) write_user_detail(in_dir(cfg, "metrics_users.tsv"), report);

  Manifest m("evaluate", cfg);
  m.input("prepared", in_dir(cfg, kPrepared));
  m.input("checkpoint", ck_path);
  m.input("item_categories", cfg.paths.item_categories);
  m.write(in_dir(cfg, "manifest-evaluate.json"));
  for (const auto& row : report.mean)
    out << "ndcg@" << row.n << ' ' << format_real(row.ndcg) << "  mrr@" << row.n << ' '
        << format_real(row.mrr) << "  f1@" << row.n << ' ' << format_real(row.f1) << '\n';
  if (kl) out << "category kl " << format_real(kl->kl) << " over " << kl->users_evaluated << " users\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  auto ws = load_workspace(cfg);
  const auto aux = load_aux(cfg, ws.ds, true);
  const auto cats = load_categories(cfg, ws.ds);
  const auto train = ws.ds.items_by_user(Split::Train);
  std::ostringstream table;
  table << "variant";
  for (int n : cfg.eval.cutoffs) table << "\tf1@" << n << "\tmrr@" << n << "\tndcg@" << n;
  if (!cats.empty()) table << "\tcategory_kl";
  table << "\tepochs\n";
  for (auto v : {FusionVariant::None, FusionVariant::Cross, FusionVariant::Concat,
                 FusionVariant::PlainSum, FusionVariant::WeightedSum}) {
    ModelConfig mc = cfg.model;
    mc.fusion.variant = v;
    const auto run = train_and_evaluate(ws.ds, ws.graphs, aux, mc, cfg.eval.cutoffs, cfg.eval.kl_list_length);
    table << variant_name(v);
    for (int n : cfg.eval.cutoffs)
      table << '\t' << format_real(run.test.value("f1", n)) << '\t' << format_real(run.test.value("mrr", n))
            << '\t' << format_real(run.test.value("ndcg", n));
    if (!cats.empty()) {
      Recommendations lists;
      for (const auto& [u, l] : run.recommendations)
        lists.emplace(u, std::vector<Index>(l.begin(), l.begin() + std::min<std::size_t>(l.size(), static_cast<std::size_t>(cfg.eval.kl_list_length))));
      table << '\t' << format_real(category_kl(train, lists, cats, cfg.eval.kl_top_categories).kl);
    }
    table << '\t' << run.epochs_run << '\n';
    out << variant_name(v) << " done\n";
  }
  write_text(in_dir(cfg, "ablation.tsv"), table.str());
  Manifest m("ablate", cfg);
  m.input("prepared", in_dir(cfg, kPrepared));
  m.input("aux_users", cfg.paths.aux_users.empty() ? in_dir(cfg, kAuxUsers) : cfg.paths.aux_users);
  m.input("aux_items", cfg.paths.aux_items.empty() ? in_dir(cfg, kAuxItems) : cfg.paths.aux_items);
  m.input("item_categories", cfg.paths.item_categories);
  m.write(in_dir(cfg, "manifest-ablate.json"));
  out << table.str();
  return 0;
}

int cmd_verify_gradients(const Options& o, std::ostream& out) {
  bool ok = true;
  for (int s = 0; s < o.seeds; ++s) {
    const auto seed = o.seed + static_cast<std::uint64_t>(s);
    auto results = finite_difference_suite(seed);
    const auto closed = analytic_suite(seed);
    results.insert(results.end(), closed.begin(), closed.end());
    for (const auto& r : results) {
      out << (r.pass ? "ok   " : "FAIL ") << "seed=" << seed << ' ' << r.check << ' ' << r.tensor
          << " error=" << std::scientific << std::setprecision(3) << r.error
          << " tol=" << r.tolerance << std::defaultfloat << '\n';
      ok = ok && r.pass;
    }
  }
  out << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? 0 : static_cast<int>(ErrorKind::Numerical);
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"crossfuse: graph and auxiliary feature fusion for collaborative filtering"};
  app.name("crossfuse");
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "configuration file");
    sub->add_option("--preset", o.preset, "named preset applied before the config file");
    sub->add_option("--set", o.sets, "override one key, e.g. --set train.epochs=5");
    sub->add_option("-o,--output", o.output, "output directory (overrides paths.output and $" +
                                                std::string(kOutputEnv) + ")");
  };
  auto* prepare = app.add_subcommand("prepare", "encode interactions, attributes and graphs");
  auto* train_aux = app.add_subcommand("train-aux", "stage 1: fit the auxiliary feature extractor");
  auto* train = app.add_subcommand("train", "stage 2: fit the graph backbone with fusion");
  auto* evaluate = app.add_subcommand("evaluate", "rank test items and write metric reports");
  auto* ablate = app.add_subcommand("ablate", "compare fusion variants on one configuration");
  auto* verify = app.add_subcommand("verify-gradients", "check backward passes against references");
  for (auto* s : {prepare, train_aux, train, evaluate, ablate}) add_common(s);
  train->add_flag("--resume", o.resume, "continue from the checkpoint in the output directory");
  evaluate->add_flag("--per-user", o.per_user, "also write per-user metrics");
  verify->add_option("--seed", o.seed, "first instance seed")->capture_default_str();
  verify->add_option("--seeds", o.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return static_cast<int>(ErrorKind::Usage);
  }

  try {
    if (verify->parsed()) return cmd_verify_gradients(o, out);
    RunConfig cfg = resolve_config(o);
    if (o.per_user) cfg.eval.per_user = true;
    if (prepare->parsed()) return cmd_prepare(cfg, out);
    fs::create_directories(cfg.paths.output);
    if (train_aux->parsed()) return cmd_train_aux(cfg, out);
    if (train->parsed()) return cmd_train(cfg, o, out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, out);
    if (ablate->parsed()) return cmd_ablate(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Data);
  }
  err << app.help();
  return static_cast<int>(ErrorKind::Usage);
}

}  // namespace crossfuse
