#include "crossfuse/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "crossfuse/error.hpp"

namespace crossfuse {

void SyntheticConfig::validate() const {
  if (users < 2 || items < 2 || categories < 1 || categories > items)
    throw ConfigError("synthetic data needs >= 2 users, >= 2 items and 1..items categories");
  if (min_interactions < 1 || max_interactions < min_interactions || max_interactions >= items)
    throw ConfigError("synthetic interaction counts must satisfy 1 <= min <= max < items");
  if (!(in_category >= 0 && in_category <= 1) || !(attribute_fidelity >= 0 && attribute_fidelity <= 1))
    throw ConfigError("synthetic probabilities must lie in [0, 1]");
  if (noise_levels < 1) throw ConfigError("synthetic noise_levels must be >= 1");
}

namespace {

std::string label(const char* prefix, Index k) { return prefix + std::to_string(k); }

std::vector<std::string> labels(const char* prefix, Index n) {
  std::vector<std::string> out;
  for (Index k = 0; k < n; ++k) out.push_back(label(prefix, k));
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Index C = cfg.categories;

  // Balanced category assignment in shuffled order.
  std::vector<Index> item_cat(static_cast<std::size_t>(cfg.items));
  for (Index i = 0; i < cfg.items; ++i) item_cat[static_cast<std::size_t>(i)] = i % C;
  std::shuffle(item_cat.begin(), item_cat.end(), rng);

  std::lognormal_distribution<Real> pop(0.0, cfg.popularity_sigma);
  std::vector<Real> weight(static_cast<std::size_t>(cfg.items));
  for (auto& w : weight) w = pop(rng);

  std::vector<std::vector<Index>> members(static_cast<std::size_t>(C));
  for (Index i = 0; i < cfg.items; ++i) members[static_cast<std::size_t>(item_cat[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<std::discrete_distribution<std::size_t>> in_group;
  for (const auto& m : members) {
    std::vector<Real> w;
    for (Index i : m) w.push_back(weight[static_cast<std::size_t>(i)]);
    in_group.emplace_back(w.begin(), w.end());
  }
  std::discrete_distribution<Index> anywhere(weight.begin(), weight.end());

  std::uniform_int_distribution<Index> pick_cat(0, C - 1);
  std::uniform_int_distribution<Index> pick_count(cfg.min_interactions, cfg.max_interactions);
  std::uniform_int_distribution<Index> pick_noise(0, cfg.noise_levels - 1);
  std::bernoulli_distribution stay(cfg.in_category);
  std::bernoulli_distribution faithful(cfg.attribute_fidelity);

  SyntheticData out;
  out.user_preference.resize(static_cast<std::size_t>(cfg.users));
  std::vector<Interaction> records;
  std::vector<AuxRow> user_rows, item_rows;
  for (Index u = 0; u < cfg.users; ++u) {
    const Index pref = pick_cat(rng);
    out.user_preference[static_cast<std::size_t>(u)] = pref;
    const Index count = pick_count(rng);
    std::vector<Index> chosen;
    while (static_cast<Index>(chosen.size()) < count) {
      Index item;
      if (stay(rng)) {
        const auto& m = members[static_cast<std::size_t>(pref)];
        item = m[in_group[static_cast<std::size_t>(pref)](rng)];
      } else {
        item = anywhere(rng);
      }
      if (std::find(chosen.begin(), chosen.end(), item) == chosen.end()) chosen.push_back(item);
    }
    std::sort(chosen.begin(), chosen.end());
    for (Index i : chosen) records.push_back({u, i, 1.0, std::nullopt, Split::Train});
    const Index shown = faithful(rng) ? pref : pick_cat(rng);
    user_rows.push_back({u, {label("c", shown), label("n", pick_noise(rng))}});
  }
  for (Index i = 0; i < cfg.items; ++i)
    item_rows.push_back({i, {label("c", item_cat[static_cast<std::size_t>(i)]), label("n", pick_noise(rng))}});

  InteractionDataset full(cfg.users, cfg.items, std::move(records));
  full.user_ids = IdMap::identity(cfg.users);
  full.item_ids = IdMap::identity(cfg.items);
  out.dataset = split_dataset(full, cfg.ratios, cfg.seed);

  std::vector<AuxField> user_fields{{"preference", labels("c", C), 0}, {"noise", labels("n", cfg.noise_levels), 0}};
  std::vector<AuxField> item_fields{{"category", labels("c", C), 0}, {"noise", labels("n", cfg.noise_levels), 0}};
  out.user_features = encode_auxiliary(user_rows, user_fields, cfg.users);
  out.item_features = encode_auxiliary(item_rows, item_fields, cfg.items);
  for (Index i = 0; i < cfg.items; ++i) out.item_categories.push_back({item_cat[static_cast<std::size_t>(i)]});
  out.category_names = labels("c", C);
  return out;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) throw DataError("cannot write " + dir + "/" + name);
    return f;
  };
  // Attribute and category rows only for nodes that occur in the
  // interaction file, since a loader cannot index any other id.
  std::vector<bool> user_seen(static_cast<std::size_t>(data.dataset.n_users()));
  std::vector<bool> item_seen(static_cast<std::size_t>(data.dataset.n_items()));
  {
    auto f = open("interactions.csv");
    for (const auto& r : data.dataset.records()) {
      f << r.user << ',' << r.item << ",1\n";
      user_seen[static_cast<std::size_t>(r.user)] = true;
      item_seen[static_cast<std::size_t>(r.item)] = true;
    }
  }
  auto write_attrs = [&](const std::string& name, const AuxFeatureMatrix& m,
                         const std::vector<bool>& seen) {
    auto f = open(name);
    f << "id";
    for (const auto& field : m.fields) f << ',' << field.name;
    f << '\n';
    for (Index n = 0; n < m.rows(); ++n) {
      if (!seen[static_cast<std::size_t>(n)]) continue;
      f << n;
      for (const auto& field : m.fields) {
        f << ',';
        for (Index c = 0; c < static_cast<Index>(field.categories.size()); ++c)
          if (m.values(n, field.offset + c) != 0) f << field.categories[static_cast<std::size_t>(c)];
      }
      f << '\n';
    }
  };
  write_attrs("users.csv", data.user_features, user_seen);
  write_attrs("items.csv", data.item_features, item_seen);
  auto f = open("categories.txt");
  for (std::size_t i = 0; i < data.item_categories.size(); ++i) {
    if (!item_seen[i]) continue;
    f << i << '\t';
    for (std::size_t k = 0; k < data.item_categories[i].size(); ++k)
      f << (k ? "|" : "") << data.category_names[static_cast<std::size_t>(data.item_categories[i][k])];
    f << '\n';
  }
}

}  // namespace crossfuse
