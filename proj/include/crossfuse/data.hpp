#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossfuse/types.hpp"

namespace crossfuse {

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

const char* split_name(Split s);

struct Interaction {
  Index user = 0;
  Index item = 0;
  Real rating = 1;
  std::optional<std::int64_t> timestamp;
  Split split = Split::Train;
};

/// Bidirectional map between raw string ids and contiguous indices,
/// assigned in first-appearance order.
class IdMap {
 public:
  Index intern(const std::string& raw);
  std::optional<Index> find(const std::string& raw) const;
  const std::string& raw(Index idx) const { return raw_[static_cast<std::size_t>(idx)]; }
  Index size() const { return static_cast<Index>(raw_.size()); }

  /// Two columns: raw id, internal index.
  void save(const std::string& path, char delimiter = '\t') const;
  static IdMap load(const std::string& path);

  /// Identity map over 0..count-1 (ids are their own decimal index).
  static IdMap identity(Index count);

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, Index> index_;
};

/// Observed user-item interactions with a split tag per record and the
/// train-split adjacency lists N(u), N(i) (sorted, duplicate free).
class InteractionDataset {
 public:
  InteractionDataset() = default;
  InteractionDataset(Index n_users, Index n_items, std::vector<Interaction> records);

  Index n_users() const { return n_users_; }
  Index n_items() const { return n_items_; }
  const std::vector<Interaction>& records() const { return records_; }

  const std::vector<Index>& user_items(Index u) const {
    return user_items_[static_cast<std::size_t>(u)];
  }
  const std::vector<Index>& item_users(Index i) const {
    return item_users_[static_cast<std::size_t>(i)];
  }
  Index user_degree(Index u) const { return static_cast<Index>(user_items(u).size()); }
  Index item_degree(Index i) const { return static_cast<Index>(item_users(i).size()); }
  bool has_train_pair(Index u, Index i) const;

  /// True when every rating equals 1 (implicit feedback).
  bool implicit() const;

  std::vector<Rated> rated(Split s) const;
  std::vector<UserItem> pairs(Split s) const;
  std::size_t count(Split s) const;

  /// Per-user sorted item lists of a split.
  std::vector<std::vector<Index>> items_by_user(Split s) const;

  IdMap user_ids;
  IdMap item_ids;

 private:
  void validate_and_index();

  Index n_users_ = 0;
  Index n_items_ = 0;
  std::vector<Interaction> records_;
  std::vector<std::vector<Index>> user_items_;
  std::vector<std::vector<Index>> item_users_;
};

struct InteractionSchema {
  int user_col = 0;
  int item_col = 1;
  /// Negative: implicit feedback, every record gets rating 1.
  int rating_col = 2;
  int timestamp_col = -1;
  /// 0 detects comma or tab from the first data line.
  char delimiter = 0;
  bool header = false;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t duplicates = 0;
};

InteractionDataset load_interactions(const std::string& path, const InteractionSchema& schema,
                                     LoadReport* report = nullptr);

/// One categorical attribute. `categories` lists the known values; the
/// blank token occupies the slot right after them.
struct AuxField {
  std::string name;
  std::vector<std::string> categories;
  Index offset = 0;

  Index cardinality() const { return static_cast<Index>(categories.size()) + 1; }
  Index blank_slot() const { return offset + static_cast<Index>(categories.size()); }
  std::optional<Index> category_index(const std::string& value) const;
};

struct AuxFeatureMatrix {
  MatrixXr values;
  std::vector<AuxField> fields;

  Index rows() const { return values.rows(); }
  Index dim() const { return values.cols(); }
};

/// A parsed attribute row: node index and one optional value per field.
struct AuxRow {
  Index node = 0;
  std::vector<std::optional<std::string>> values;
};

/// Concatenated one-hot encoding. Nodes without a row and missing or
/// unknown values land on their field's blank slot.
AuxFeatureMatrix encode_auxiliary(const std::vector<AuxRow>& rows, std::vector<AuxField> fields,
                                  Index node_count);

/// Reads a delimited attribute file (first column raw node id). When
/// `fields` is empty, field names come from the header (if any) and
/// categories are the sorted distinct values observed in the file.
AuxFeatureMatrix encode_auxiliary(const std::string& path, std::vector<AuxField> fields,
                                  const IdMap& ids, Index node_count, bool header = true,
                                  char delimiter = 0);

struct SplitRatios {
  double train = 0.72;
  double validation = 0.08;
  double test = 0.20;
};

struct SplitReport {
  /// Users with fewer records than requested splits (kept entirely in train).
  std::vector<Index> short_users;
};

InteractionDataset split_dataset(const InteractionDataset& ds, const SplitRatios& ratios,
                                 std::uint64_t seed, SplitReport* report = nullptr);

using Rng = std::mt19937_64;

struct NegativeSample {
  std::vector<Index> items;
  /// Set when the user has interacted with every item.
  bool exhausted = false;
};

/// Uniform draws from items the user has not interacted with in train.
/// Distinct within one call whenever enough candidates exist.
NegativeSample sample_negatives(const InteractionDataset& ds, Index user, Index count, Rng& rng);

/// Item category lists for category-level analyses (one line per item:
/// raw id, then categories separated by '|').
std::vector<std::vector<Index>> load_item_categories(const std::string& path, const IdMap& items,
                                                     std::vector<std::string>* names = nullptr);

/// Prepared-dataset text form: user index, item index, rating, timestamp
/// (empty when absent), split name.
void save_prepared(const std::string& path, const InteractionDataset& ds);
InteractionDataset load_prepared(const std::string& path, Index n_users, Index n_items);

}  // namespace crossfuse
