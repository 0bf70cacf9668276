#include "crossfuse/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crossfuse/error.hpp"

namespace crossfuse {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

char detect_delimiter(std::string_view line) {
  return line.find('\t') != std::string_view::npos ? '\t' : ',';
}

bool blank_line(std::string_view line) { return trim(line).empty(); }

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------- IdMap

Index IdMap::intern(const std::string& raw) {
  auto [it, inserted] = index_.try_emplace(raw, static_cast<Index>(raw_.size()));
  if (inserted) raw_.push_back(raw);
  return it->second;
}

std::optional<Index> IdMap::find(const std::string& raw) const {
  auto it = index_.find(raw);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void IdMap::save(const std::string& path, char delimiter) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t k = 0; k < raw_.size(); ++k) out << raw_[k] << delimiter << k << '\n';
}

IdMap IdMap::load(const std::string& path) {
  IdMap map;
  auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (blank_line(lines[ln])) continue;
    auto cols = split_line(lines[ln], detect_delimiter(lines[ln]));
    Index idx = 0;
    if (cols.size() != 2 || !parse_number(cols[1], idx) || idx != map.size())
      throw DataError(path + ":" + std::to_string(ln + 1) + ": malformed id map row");
    map.intern(std::string(cols[0]));
  }
  return map;
}

IdMap IdMap::identity(Index count) {
  IdMap map;
  for (Index k = 0; k < count; ++k) map.intern(std::to_string(k));
  return map;
}

// ---------------------------------------------------------------- dataset

InteractionDataset::InteractionDataset(Index n_users, Index n_items,
                                       std::vector<Interaction> records)
    : n_users_(n_users), n_items_(n_items), records_(std::move(records)) {
  validate_and_index();
}

void InteractionDataset::validate_and_index() {
  std::set<std::tuple<int, Index, Index>> seen;
  user_items_.assign(static_cast<std::size_t>(n_users_), {});
  item_users_.assign(static_cast<std::size_t>(n_items_), {});
  for (const auto& r : records_) {
    if (r.user < 0 || r.user >= n_users_ || r.item < 0 || r.item >= n_items_)
      throw DataError("interaction index out of range");
    if (!seen.emplace(static_cast<int>(r.split), r.user, r.item).second)
      throw DataError("duplicate (user, item) pair within split " +
                      std::string(split_name(r.split)));
    if (r.split == Split::Train) {
      user_items_[static_cast<std::size_t>(r.user)].push_back(r.item);
      item_users_[static_cast<std::size_t>(r.item)].push_back(r.user);
    }
  }
  for (auto& v : user_items_) std::sort(v.begin(), v.end());
  for (auto& v : item_users_) std::sort(v.begin(), v.end());
}

bool InteractionDataset::has_train_pair(Index u, Index i) const {
  const auto& items = user_items(u);
  return std::binary_search(items.begin(), items.end(), i);
}

bool InteractionDataset::implicit() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const Interaction& r) { return r.rating == 1.0; });
}

std::vector<Rated> InteractionDataset::rated(Split s) const {
  std::vector<Rated> out;
  for (const auto& r : records_)
    if (r.split == s) out.push_back({r.user, r.item, r.rating});
  return out;
}

std::vector<UserItem> InteractionDataset::pairs(Split s) const {
  std::vector<UserItem> out;
  for (const auto& r : records_)
    if (r.split == s) out.push_back({r.user, r.item});
  return out;
}

std::size_t InteractionDataset::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(), [s](const Interaction& r) { return r.split == s; }));
}

std::vector<std::vector<Index>> InteractionDataset::items_by_user(Split s) const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n_users_));
  for (const auto& r : records_)
    if (r.split == s) out[static_cast<std::size_t>(r.user)].push_back(r.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

// ---------------------------------------------------------------- loading

InteractionDataset load_interactions(const std::string& path, const InteractionSchema& schema,
                                     LoadReport* report) {
  auto lines = read_lines(path);
  LoadReport local;
  IdMap users, items;
  // (user, item) -> position in `records`; later duplicates overwrite.
  std::map<std::pair<Index, Index>, std::size_t> position;
  std::vector<Interaction> records;

  char delim = schema.delimiter;
  bool header_pending = schema.header;
  const int needed = std::max({schema.user_col, schema.item_col, schema.rating_col,
                               schema.timestamp_col});
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    if (blank_line(line)) continue;
    if (delim == 0) delim = detect_delimiter(line);
    if (header_pending) {
      header_pending = false;
      continue;
    }
    ++local.lines;
    auto cols = split_line(line, delim);
    auto where = [&] { return path + ":" + std::to_string(ln + 1) + ": "; };
    if (static_cast<int>(cols.size()) <= needed)
      throw DataError(where() + "malformed row (expected at least " + std::to_string(needed + 1) +
                      " columns)");
    const auto user_raw = cols[static_cast<std::size_t>(schema.user_col)];
    const auto item_raw = cols[static_cast<std::size_t>(schema.item_col)];
    if (user_raw.empty() || item_raw.empty()) throw DataError(where() + "malformed row (empty id)");
    Interaction rec;
    if (schema.rating_col >= 0) {
      if (!parse_number(cols[static_cast<std::size_t>(schema.rating_col)], rec.rating) ||
          !std::isfinite(rec.rating))
        throw DataError(where() + "malformed row (rating)");
    }
    if (schema.timestamp_col >= 0) {
      std::int64_t ts = 0;
      if (!parse_number(cols[static_cast<std::size_t>(schema.timestamp_col)], ts))
        throw DataError(where() + "malformed row (timestamp)");
      rec.timestamp = ts;
    }
    rec.user = users.intern(std::string(user_raw));
    rec.item = items.intern(std::string(item_raw));
    auto [it, inserted] = position.try_emplace({rec.user, rec.item}, records.size());
    if (inserted) {
      records.push_back(rec);
    } else {
      ++local.duplicates;
      records[it->second] = rec;
    }
  }
  if (records.empty()) throw DataError(path + ": zero rows");

  std::stable_sort(records.begin(), records.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.item, a.timestamp) < std::tie(b.user, b.item, b.timestamp);
  });
  InteractionDataset ds(users.size(), items.size(), std::move(records));
  ds.user_ids = std::move(users);
  ds.item_ids = std::move(items);
  if (report) *report = local;
  return ds;
}

// ---------------------------------------------------------------- auxiliary

std::optional<Index> AuxField::category_index(const std::string& value) const {
  auto it = std::find(categories.begin(), categories.end(), value);
  if (it == categories.end()) return std::nullopt;
  return static_cast<Index>(it - categories.begin());
}

AuxFeatureMatrix encode_auxiliary(const std::vector<AuxRow>& rows, std::vector<AuxField> fields,
                                  Index node_count) {
  Index width = 0;
  for (auto& f : fields) {
    f.offset = width;
    width += f.cardinality();
  }
  AuxFeatureMatrix out;
  out.values = MatrixXr::Zero(node_count, width);
  std::vector<bool> seen(static_cast<std::size_t>(node_count), false);
  for (const auto& row : rows) {
    if (row.node < 0 || row.node >= node_count)
      throw DataError("auxiliary row for node " + std::to_string(row.node) + " outside [0, " +
                      std::to_string(node_count) + ")");
    if (seen[static_cast<std::size_t>(row.node)])
      throw DataError("duplicate auxiliary row for node " + std::to_string(row.node));
    seen[static_cast<std::size_t>(row.node)] = true;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      Index slot = fields[f].blank_slot();
      if (f < row.values.size() && row.values[f]) {
        if (auto c = fields[f].category_index(*row.values[f])) slot = fields[f].offset + *c;
      }
      out.values(row.node, slot) = 1;
    }
  }
  for (Index node = 0; node < node_count; ++node) {
    if (seen[static_cast<std::size_t>(node)]) continue;
    for (const auto& f : fields) out.values(node, f.blank_slot()) = 1;
  }
  out.fields = std::move(fields);
  return out;
}

AuxFeatureMatrix encode_auxiliary(const std::string& path, std::vector<AuxField> fields,
                                  const IdMap& ids, Index node_count, bool header, char delimiter) {
  auto lines = read_lines(path);
  std::vector<std::string> header_names;
  std::vector<AuxRow> rows;
  std::size_t width = 0;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (blank_line(lines[ln])) continue;
    if (delimiter == 0) delimiter = detect_delimiter(lines[ln]);
    auto cols = split_line(lines[ln], delimiter);
    if (header) {
      header = false;
      for (std::size_t c = 1; c < cols.size(); ++c) header_names.emplace_back(cols[c]);
      continue;
    }
    width = std::max(width, cols.size() - 1);
    auto node = ids.find(std::string(cols[0]));
    if (!node)
      throw DataError(path + ":" + std::to_string(ln + 1) + ": node id '" + std::string(cols[0]) +
                      "' not present in the dataset");
    AuxRow row{*node, {}};
    for (std::size_t c = 1; c < cols.size(); ++c) {
      if (cols[c].empty())
        row.values.emplace_back(std::nullopt);
      else
        row.values.emplace_back(std::string(cols[c]));
    }
    rows.push_back(std::move(row));
  }
  if (fields.empty()) {
    width = std::max(width, header_names.size());
    fields.resize(width);
    for (std::size_t f = 0; f < width; ++f) {
      fields[f].name = f < header_names.size() ? header_names[f] : "field" + std::to_string(f);
      std::set<std::string> distinct;
      for (const auto& row : rows)
        if (f < row.values.size() && row.values[f]) distinct.insert(*row.values[f]);
      fields[f].categories.assign(distinct.begin(), distinct.end());
    }
  }
  return encode_auxiliary(rows, std::move(fields), node_count);
}

// ---------------------------------------------------------------- splitting

InteractionDataset split_dataset(const InteractionDataset& ds, const SplitRatios& ratios,
                                 std::uint64_t seed, SplitReport* report) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (ratios.train <= 0 || ratios.validation < 0 || ratios.test < 0 || std::abs(sum - 1) > 1e-9)
    throw ConfigError("split ratios must be non-negative, train positive, and sum to 1");
  const int requested = 1 + (ratios.validation > 0) + (ratios.test > 0);

  std::vector<std::vector<std::size_t>> by_user(static_cast<std::size_t>(ds.n_users()));
  for (std::size_t k = 0; k < ds.records().size(); ++k)
    by_user[static_cast<std::size_t>(ds.records()[k].user)].push_back(k);

  std::vector<Interaction> records = ds.records();
  Rng rng(seed);
  SplitReport local;
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    auto& idx = by_user[u];
    const auto n = static_cast<long long>(idx.size());
    for (auto k : idx) records[k].split = Split::Train;
    if (n == 0) continue;
    if (n < requested) {
      local.short_users.push_back(static_cast<Index>(u));
      continue;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    long long n_test = std::llround(ratios.test * static_cast<double>(n));
    long long n_val = std::llround(ratios.validation * static_cast<double>(n));
    if (ratios.test > 0) n_test = std::max(n_test, 1LL);
    if (ratios.validation > 0) n_val = std::max(n_val, 1LL);
    while (n_test + n_val > n - 1) {
      if (n_val > (ratios.validation > 0 ? 1 : 0) && n_val >= n_test)
        --n_val;
      else
        --n_test;
    }
    for (long long k = 0; k < n_test; ++k) records[idx[static_cast<std::size_t>(k)]].split = Split::Test;
    for (long long k = n_test; k < n_test + n_val; ++k)
      records[idx[static_cast<std::size_t>(k)]].split = Split::Validation;
  }
  InteractionDataset out(ds.n_users(), ds.n_items(), std::move(records));
  out.user_ids = ds.user_ids;
  out.item_ids = ds.item_ids;
  if (report) *report = std::move(local);
  return out;
}

// ---------------------------------------------------------------- negatives

NegativeSample sample_negatives(const InteractionDataset& ds, Index user, Index count, Rng& rng) {
  if (user < 0 || user >= ds.n_users()) throw DataError("user index out of range");
  NegativeSample out;
  const auto& positives = ds.user_items(user);
  const Index pool = ds.n_items() - static_cast<Index>(positives.size());
  if (pool <= 0) {
    out.exhausted = true;
    return out;
  }
  if (count <= 0) return out;
  const bool distinct = pool >= count;
  auto is_positive = [&](Index i) {
    return std::binary_search(positives.begin(), positives.end(), i);
  };
  out.items.reserve(static_cast<std::size_t>(count));
  if (pool * 4 < ds.n_items()) {
    // Dense user: draw from the explicit candidate list.
    std::vector<Index> candidates;
    candidates.reserve(static_cast<std::size_t>(pool));
    for (Index i = 0; i < ds.n_items(); ++i)
      if (!is_positive(i)) candidates.push_back(i);
    while (static_cast<Index>(out.items.size()) < count) {
      std::uniform_int_distribution<Index> pick(0, static_cast<Index>(candidates.size()) - 1);
      auto k = static_cast<std::size_t>(pick(rng));
      out.items.push_back(candidates[k]);
      if (distinct) {
        candidates[k] = candidates.back();
        candidates.pop_back();
      }
    }
    return out;
  }
  std::uniform_int_distribution<Index> pick(0, ds.n_items() - 1);
  while (static_cast<Index>(out.items.size()) < count) {
    Index i = pick(rng);
    if (is_positive(i)) continue;
    if (distinct && std::find(out.items.begin(), out.items.end(), i) != out.items.end()) continue;
    out.items.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------- misc files

std::vector<std::vector<Index>> load_item_categories(const std::string& path, const IdMap& items,
                                                     std::vector<std::string>* names) {
  auto lines = read_lines(path);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(items.size()));
  IdMap categories;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (blank_line(lines[ln])) continue;
    auto cols = split_line(lines[ln], detect_delimiter(lines[ln]));
    if (cols.size() < 2) throw DataError(path + ":" + std::to_string(ln + 1) + ": malformed row");
    auto item = items.find(std::string(cols[0]));
    if (!item) continue;
    auto& dst = out[static_cast<std::size_t>(*item)];
    for (auto label : split_line(cols[1], '|')) {
      if (label.empty()) continue;
      Index c = categories.intern(std::string(label));
      if (std::find(dst.begin(), dst.end(), c) == dst.end()) dst.push_back(c);
    }
  }
  if (names) {
    names->clear();
    for (Index c = 0; c < categories.size(); ++c) names->push_back(categories.raw(c));
  }
  return out;
}

void save_prepared(const std::string& path, const InteractionDataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  for (const auto& r : ds.records()) {
    out << r.user << '\t' << r.item << '\t' << r.rating << '\t';
    if (r.timestamp) out << *r.timestamp;
    out << '\t' << split_name(r.split) << '\n';
  }
}

InteractionDataset load_prepared(const std::string& path, Index n_users, Index n_items) {
  auto lines = read_lines(path);
  std::vector<Interaction> records;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (blank_line(lines[ln])) continue;
    auto cols = split_line(lines[ln], '\t');
    Interaction r;
    auto bad = [&] {
      return DataError(path + ":" + std::to_string(ln + 1) + ": malformed prepared row");
    };
    if (cols.size() != 5 || !parse_number(cols[0], r.user) || !parse_number(cols[1], r.item) ||
        !parse_number(cols[2], r.rating))
      throw bad();
    if (!cols[3].empty()) {
      std::int64_t ts = 0;
      if (!parse_number(cols[3], ts)) throw bad();
      r.timestamp = ts;
    }
    if (cols[4] == "train")
      r.split = Split::Train;
    else if (cols[4] == "validation")
      r.split = Split::Validation;
    else if (cols[4] == "test")
      r.split = Split::Test;
    else
      throw bad();
    records.push_back(r);
  }
  if (records.empty()) throw DataError(path + ": zero rows");
  return InteractionDataset(n_users, n_items, std::move(records));
}

}  // namespace crossfuse
