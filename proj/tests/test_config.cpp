#include <doctest.h>

#include <sstream>

#include "crossfuse/cli.hpp"
#include "crossfuse/config.hpp"
#include "crossfuse/synthetic.hpp"
#include "test_util.hpp"

using namespace crossfuse;

TEST_CASE("named presets carry the reported settings") {
  RunConfig a;
  apply_preset(a, "ml1m-lightgcn");
  CHECK(a.model.train.eta1 == 0.001);
  CHECK(a.model.epsilon_user == 0.3);
  CHECK(a.model.fusion.lambda1 == 0.05);
  CHECK(a.model.fusion.lambda2 == 0.001);

  RunConfig b;
  apply_preset(b, "ml1m-gin");
  CHECK(b.model.train.eta1 == 0.01);
  CHECK(b.model.epsilon_user == 0.5);
  CHECK(b.model.fusion.lambda1 == 0.1);
  CHECK(b.model.fusion.lambda2 == 0.05);

  RunConfig c;
  CHECK_THROWS_AS(apply_preset(c, "nope"), ConfigError);
}

TEST_CASE("config text parsing, precedence and snapshot round trip") {
  const auto cfg = parse_config(
      "preset = ml1m-gin\n"
      "# comment\n"
      "[fusion]\n"
      "lambda1 = 0.3\n"
      "variant = concat\n"
      "[train]\n"
      "epochs = 7\n");
  CHECK(cfg.model.fusion.lambda1 == 0.3);
  CHECK(cfg.model.fusion.lambda2 == 0.05);
  CHECK(cfg.model.fusion.variant == FusionVariant::Concat);
  CHECK(cfg.model.train.epochs == 7);

  const auto snap = config_snapshot(cfg);
  CHECK(config_snapshot(parse_config(snap)) == snap);

  RunConfig d;
  set_config_value(d, "train.seed", "99");
  CHECK(d.model.train.seed == 99);
  CHECK_THROWS_AS(set_config_value(d, "train.sed", "1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = many\n"), ConfigError);
  for (const auto& key : config_keys()) CHECK(snap.find(key.substr(key.find('.') + 1)) != std::string::npos);
}

namespace {

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST_CASE("cli usage errors and help") {
  std::string text;
  CHECK(run({"frobnicate"}, &text) != 0);
  CHECK(text.find("prepare") != std::string::npos);
  CHECK(run({}) != 0);
  CHECK(run({"--help"}) == 0);
  CHECK(run({"train", "--set", "nokey"}) != 0);
}

TEST_CASE("cli enforces stage order and runs the pipeline") {
  testutil::TempDir dir("cli");
  SyntheticConfig sc;
  sc.users = 20;
  sc.items = 30;
  sc.categories = 3;
  sc.max_interactions = 10;
  write_synthetic(generate_synthetic(sc), dir.path.string());
  const std::string out = dir.file("run");
  std::vector<std::string> common{
      "--set", "paths.interactions=" + dir.file("interactions.csv"),
      "--set", "paths.user_attributes=" + dir.file("users.csv"),
      "--set", "paths.item_attributes=" + dir.file("items.csv"),
      "--set", "paths.item_categories=" + dir.file("categories.txt"),
      "--set", "train.epochs=3", "--set", "backbone.dim=8",
      "--set", "auxnet.hidden=8", "-o", out};
  auto with = [&](std::string cmd) {
    std::vector<std::string> a{std::move(cmd)};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  std::string text;
  REQUIRE(run(with("prepare"), &text) == 0);
  CHECK(run(with("train"), &text) == 2);
  REQUIRE(run(with("train-aux"), &text) == 0);
  REQUIRE(run(with("train"), &text) == 0);
  CHECK(std::filesystem::exists(out + "/checkpoint.ckpt"));
  CHECK(std::filesystem::exists(out + "/train_log.tsv"));
  REQUIRE(run(with("evaluate"), &text) == 0);
  CHECK(testutil::read_file(out + "/metrics.tsv").find("ndcg") != std::string::npos);
  CHECK(std::filesystem::exists(out + "/manifest-evaluate.json"));
  CHECK(run({"verify-gradients", "--seed", "7"}, &text) == 0);
  CHECK(text.find("FAIL") == std::string::npos);
}
