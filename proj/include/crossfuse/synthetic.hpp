#pragma once

#include <cstdint>
#include <vector>

#include "crossfuse/data.hpp"

namespace crossfuse {

/// Latent-category generator: every item belongs to one of `categories`
/// groups and every user prefers one. Interactions land in the preferred
/// group with probability `in_category`, otherwise anywhere; item
/// popularity within a group is log-normal. Users expose a noisy copy of
/// their preference plus an uninformative field, items expose their group
/// plus an uninformative field.
struct SyntheticConfig {
  Index users = 200;
  Index items = 300;
  Index categories = 5;
  Index min_interactions = 4;
  Index max_interactions = 30;
  Real in_category = 0.8;
  /// Probability that the user's preference attribute is the true one.
  Real attribute_fidelity = 0.9;
  Index noise_levels = 4;
  Real popularity_sigma = 1.0;
  SplitRatios ratios;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  InteractionDataset dataset;  ///< already split
  AuxFeatureMatrix user_features;
  AuxFeatureMatrix item_features;
  std::vector<std::vector<Index>> item_categories;
  std::vector<Index> user_preference;
  std::vector<std::string> category_names;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

/// Writes interactions.csv (user,item,rating), users.csv and items.csv
/// (id plus attribute columns, with header) and categories.txt into `dir`.
void write_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace crossfuse
