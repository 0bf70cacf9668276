#include <doctest.h>

#include <algorithm>
#include <set>

#include "crossfuse/data.hpp"
#include "crossfuse/error.hpp"
#include "test_util.hpp"

using namespace crossfuse;

namespace {

InteractionDataset many_records(Index users, Index per_user, Index items) {
  std::vector<Interaction> recs;
  for (Index u = 0; u < users; ++u)
    for (Index k = 0; k < per_user; ++k) recs.push_back({u, (u * 7 + k) % items, 1.0, {}, Split::Train});
  return InteractionDataset(users, items, recs);
}

}  // namespace

TEST_CASE("load_interactions parses and reindexes raw ids") {
  testutil::TempDir dir("data");
  testutil::write_file(dir.file("r.csv"), "u1,i1,5.0\nu1,i2,3.0\nu2,i1,4.0\n");
  const auto ds = load_interactions(dir.file("r.csv"), InteractionSchema{});
  CHECK(ds.n_users() == 2);
  CHECK(ds.n_items() == 2);
  CHECK(ds.records().size() == 3);
  CHECK(ds.user_ids.raw(0) == "u1");
  CHECK(ds.item_ids.raw(1) == "i2");
  CHECK(ds.records()[1].rating == 3.0);
  CHECK_FALSE(ds.implicit());
  for (Index u = 0; u < ds.n_users(); ++u) CHECK(*ds.user_ids.find(ds.user_ids.raw(u)) == u);
}

TEST_CASE("load_interactions rejects empty, malformed and missing files") {
  testutil::TempDir dir("data-bad");
  testutil::write_file(dir.file("empty.csv"), "");
  CHECK_THROWS_AS(load_interactions(dir.file("empty.csv"), InteractionSchema{}), DataError);
  testutil::write_file(dir.file("bad.csv"), "u1,i1,5\nu2,i2,notanumber\n");
  try {
    load_interactions(dir.file("bad.csv"), InteractionSchema{});
    FAIL("malformed row accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_interactions(dir.file("absent.csv"), InteractionSchema{}), DataError);
}

TEST_CASE("one-hot encoding of two fields with blank slots") {
  std::vector<AuxField> fields{{"a", {"x", "y", "z"}, 0}, {"b", {"p", "q"}, 0}};
  std::vector<AuxRow> rows{{0, {std::string("y"), std::string("p")}},
                           {1, {std::string("z"), std::nullopt}}};
  const auto enc = encode_auxiliary(rows, fields, 3);
  REQUIRE(enc.dim() == 7);
  MatrixXr want = MatrixXr::Zero(3, 7);
  want(0, 1) = 1;
  want(0, 4) = 1;
  want(1, 2) = 1;
  want(1, 6) = 1;  // second field blank
  want(2, 3) = 1;  // node without a row
  want(2, 6) = 1;
  CHECK(enc.values == want);
  for (Index r = 0; r < enc.rows(); ++r) CHECK(enc.values.row(r).sum() == 2.0);
}

TEST_CASE("unknown categorical value maps to the blank slot") {
  std::vector<AuxField> fields{{"a", {"x", "y"}, 0}};
  const auto enc = encode_auxiliary({{0, {std::string("w")}}}, fields, 1);
  CHECK(enc.values(0, 2) == 1.0);
  CHECK(enc.values.sum() == 1.0);
}

TEST_CASE("encode_auxiliary rejects out-of-range and duplicate nodes") {
  std::vector<AuxField> fields{{"a", {"x"}, 0}};
  CHECK_THROWS_AS(encode_auxiliary({{5, {std::string("x")}}}, fields, 2), DataError);
  CHECK_THROWS_AS(encode_auxiliary({{0, {std::string("x")}}, {0, {std::string("x")}}}, fields, 2),
                  DataError);
}

TEST_CASE("split ratios over one user's 100 records") {
  const auto ds = many_records(1, 100, 100);
  auto ds1 = split_dataset(ds, SplitRatios{0.8, 0.0, 0.2}, 3);
  CHECK(ds1.count(Split::Train) == 80);
  CHECK(ds1.count(Split::Test) == 20);
  auto ds2 = split_dataset(ds, SplitRatios{}, 3);
  CHECK(ds2.count(Split::Train) == 72);
  CHECK(ds2.count(Split::Validation) == 8);
  CHECK(ds2.count(Split::Test) == 20);
}

TEST_CASE("split is deterministic per seed and partitions every record") {
  const auto ds = many_records(20, 12, 40);
  const auto a = split_dataset(ds, SplitRatios{}, 11);
  const auto b = split_dataset(ds, SplitRatios{}, 11);
  REQUIRE(a.records().size() == ds.records().size());
  bool same = true;
  for (std::size_t k = 0; k < a.records().size(); ++k)
    same = same && a.records()[k].split == b.records()[k].split;
  CHECK(same);
  CHECK(a.count(Split::Train) + a.count(Split::Validation) + a.count(Split::Test) ==
        ds.records().size());
}

TEST_CASE("short users stay in train") {
  std::vector<Interaction> recs{{0, 0, 1, {}, Split::Train}, {1, 0, 1, {}, Split::Train},
                                {1, 1, 1, {}, Split::Train}, {1, 2, 1, {}, Split::Train},
                                {1, 3, 1, {}, Split::Train}};
  SplitReport rep;
  const auto s = split_dataset(InteractionDataset(2, 4, recs), SplitRatios{}, 1, &rep);
  CHECK(std::find(rep.short_users.begin(), rep.short_users.end(), 0) != rep.short_users.end());
  CHECK(s.records()[0].split == Split::Train);
}

TEST_CASE("negative sampling") {
  std::vector<Interaction> recs{{0, 0, 1, {}, Split::Train}, {0, 1, 1, {}, Split::Train},
                                {0, 2, 1, {}, Split::Train}, {1, 0, 1, {}, Split::Train}};
  const InteractionDataset ds(2, 3, recs);
  Rng rng(5);
  const auto full = sample_negatives(ds, 0, 1, rng);
  CHECK(full.exhausted);
  CHECK(full.items.empty());

  const auto one = sample_negatives(ds, 1, 1, rng);
  REQUIRE(one.items.size() == 1);
  CHECK_FALSE(ds.has_train_pair(1, one.items[0]));

  const auto two = sample_negatives(ds, 1, 2, rng);
  CHECK(std::set<Index>(two.items.begin(), two.items.end()) == std::set<Index>{1, 2});

  Rng r1(9), r2(9);
  const auto big = many_records(3, 4, 50);
  for (int k = 0; k < 20; ++k)
    CHECK(sample_negatives(big, k % 3, 3, r1).items == sample_negatives(big, k % 3, 3, r2).items);
}

TEST_CASE("id map and prepared form round trip") {
  testutil::TempDir dir("data-rt");
  IdMap m;
  CHECK(m.intern("b") == 0);
  CHECK(m.intern("a") == 1);
  CHECK(m.intern("b") == 0);
  m.save(dir.file("m.map"));
  const auto back = IdMap::load(dir.file("m.map"));
  CHECK(back.size() == 2);
  CHECK(back.raw(1) == "a");

  const auto ds = split_dataset(many_records(5, 6, 12), SplitRatios{}, 2);
  save_prepared(dir.file("p.tsv"), ds);
  const auto re = load_prepared(dir.file("p.tsv"), 5, 12);
  REQUIRE(re.records().size() == ds.records().size());
  for (std::size_t k = 0; k < ds.records().size(); ++k) {
    CHECK(re.records()[k].user == ds.records()[k].user);
    CHECK(re.records()[k].item == ds.records()[k].item);
    CHECK(re.records()[k].split == ds.records()[k].split);
  }
}
