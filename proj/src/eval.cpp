#include "crossfuse/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "crossfuse/error.hpp"

namespace crossfuse {

std::vector<Index> rank_topn(const MatrixXr& user_vectors, const MatrixXr& item_vectors, Index user,
                             Index n, const std::vector<Index>& exclude) {
  if (user < 0 || user >= user_vectors.rows()) throw DataError("rank_topn: user out of range");
  if (user_vectors.cols() != item_vectors.cols())
    throw DimensionError("rank_topn: user and item vectors differ in width");
  const VectorXr scores = item_vectors * user_vectors.row(user).transpose();
  std::vector<Index> pool;
  pool.reserve(static_cast<std::size_t>(item_vectors.rows()));
  auto ex = exclude.begin();
  for (Index i = 0; i < item_vectors.rows(); ++i) {
    while (ex != exclude.end() && *ex < i) ++ex;
    if (ex != exclude.end() && *ex == i) continue;
    pool.push_back(i);
  }
  const auto keep = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max<Index>(n, 0)));
  auto better = [&](Index a, Index b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
  pool.resize(keep);
  return pool;
}

Recommendations recommend(const MatrixXr& user_vectors, const MatrixXr& item_vectors, Index n,
                          const std::vector<std::vector<Index>>& targets,
                          const std::vector<const std::vector<std::vector<Index>>*>& seen) {
  Recommendations out;
  std::vector<Index> exclude;
  for (Index u = 0; u < static_cast<Index>(targets.size()); ++u) {
    if (targets[static_cast<std::size_t>(u)].empty()) continue;
    exclude.clear();
    for (const auto* lists : seen) {
      const auto& l = (*lists)[static_cast<std::size_t>(u)];
      exclude.insert(exclude.end(), l.begin(), l.end());
    }
    std::sort(exclude.begin(), exclude.end());
    out.emplace(u, rank_topn(user_vectors, item_vectors, u, n, exclude));
  }
  return out;
}

Real RankingReport::value(const std::string& metric, int n) const {
  for (const auto& row : mean) {
    if (row.n != n) continue;
    if (metric == "precision") return row.precision;
    if (metric == "recall") return row.recall;
    if (metric == "f1") return row.f1;
    if (metric == "mrr") return row.mrr;
    if (metric == "ndcg") return row.ndcg;
    throw ConfigError("unknown metric '" + metric + "'");
  }
  throw ConfigError("report has no cutoff " + std::to_string(n));
}

namespace {

MetricRow score_list(const std::vector<Index>& ranked, const std::vector<Index>& truth, int n) {
  MetricRow row;
  row.n = n;
  const auto depth = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  std::size_t hits = 0;
  Real dcg = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    if (!std::binary_search(truth.begin(), truth.end(), ranked[k])) continue;
    ++hits;
    const auto rank = static_cast<Real>(k + 1);
    dcg += 1.0 / std::log2(rank + 1.0);
    if (row.mrr == 0) row.mrr = 1.0 / rank;
  }
  Real idcg = 0;
  const auto ideal = std::min<std::size_t>(truth.size(), static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < ideal; ++k) idcg += 1.0 / std::log2(static_cast<Real>(k) + 2.0);
  row.precision = static_cast<Real>(hits) / n;
  row.recall = static_cast<Real>(hits) / static_cast<Real>(truth.size());
  row.f1 = hits == 0 ? 0.0 : 2 * row.precision * row.recall / (row.precision + row.recall);
  row.ndcg = idcg > 0 ? dcg / idcg : 0.0;
  return row;
}

}  // namespace

RankingReport ranking_metrics(const Recommendations& recs,
                              const std::vector<std::vector<Index>>& truth,
                              const std::vector<int>& ns, bool per_user) {
  if (ns.empty()) throw ConfigError("no cutoffs requested");
  for (int n : ns)
    if (n < 1) throw ConfigError("cutoffs must be >= 1");
  RankingReport report;
  report.ns = ns;
  report.mean.resize(ns.size());
  for (std::size_t k = 0; k < ns.size(); ++k) report.mean[k].n = ns[k];

  for (Index u = 0; u < static_cast<Index>(truth.size()); ++u) {
    const auto& t = truth[static_cast<std::size_t>(u)];
    if (t.empty()) continue;
    auto it = recs.find(u);
    if (it == recs.end()) {
      ++report.users_skipped;
      continue;
    }
    ++report.users_evaluated;
    UserMetrics detail{u, {}};
    for (std::size_t k = 0; k < ns.size(); ++k) {
      const auto row = score_list(it->second, t, ns[k]);
      auto& m = report.mean[k];
      m.precision += row.precision;
      m.recall += row.recall;
      m.f1 += row.f1;
      m.mrr += row.mrr;
      m.ndcg += row.ndcg;
      if (per_user) detail.rows.push_back(row);
    }
    if (per_user) report.per_user.push_back(std::move(detail));
  }
  if (report.users_evaluated > 0) {
    const auto users = static_cast<Real>(report.users_evaluated);
    for (auto& m : report.mean) {
      m.precision /= users;
      m.recall /= users;
      m.f1 /= users;
      m.mrr /= users;
      m.ndcg /= users;
    }
  }
  return report;
}

KlReport category_kl(const std::vector<std::vector<Index>>& histories, const Recommendations& recs,
                     const std::vector<std::vector<Index>>& item_categories, Index k,
                     Real smoothing) {
  if (k < 1) throw ConfigError("category KL needs K >= 1");
  if (!(smoothing > 0)) throw ConfigError("category KL smoothing must be > 0");
  Index n_categories = 0;
  for (const auto& cats : item_categories)
    for (Index c : cats) n_categories = std::max(n_categories, c + 1);

  auto count_into = [&](const std::vector<Index>& items, std::vector<Real>& counts) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (Index i : items) {
      if (i < 0 || i >= static_cast<Index>(item_categories.size()))
        throw DataError("category KL: item " + std::to_string(i) + " has no category entry");
      for (Index c : item_categories[static_cast<std::size_t>(i)]) counts[static_cast<std::size_t>(c)] += 1;
    }
  };

  KlReport report;
  std::vector<Real> hist(static_cast<std::size_t>(n_categories));
  std::vector<Real> rec(static_cast<std::size_t>(n_categories));
  std::vector<Index> order(static_cast<std::size_t>(n_categories));
  for (Index u = 0; u < static_cast<Index>(histories.size()); ++u) {
    const auto& h = histories[static_cast<std::size_t>(u)];
    auto it = recs.find(u);
    if (h.empty() || it == recs.end()) {
      ++report.users_skipped;
      continue;
    }
    count_into(h, hist);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return hist[static_cast<std::size_t>(a)] > hist[static_cast<std::size_t>(b)];
    });
    CategoryProfile prof;
    prof.user = u;
    for (Index c : order) {
      if (static_cast<Index>(prof.categories.size()) == k || hist[static_cast<std::size_t>(c)] == 0) break;
      prof.categories.push_back(c);
    }
    if (prof.categories.empty()) {
      ++report.users_skipped;
      continue;
    }
    count_into(it->second, rec);
    Real p_total = 0, q_total = 0;
    for (Index c : prof.categories) {
      prof.p.push_back(hist[static_cast<std::size_t>(c)]);
      prof.q.push_back(rec[static_cast<std::size_t>(c)] + smoothing);
      p_total += prof.p.back();
      q_total += prof.q.back();
    }
    for (std::size_t l = 0; l < prof.p.size(); ++l) {
      prof.p[l] /= p_total;
      prof.q[l] /= q_total;
      if (prof.p[l] > 0) prof.kl += prof.p[l] * std::log(prof.p[l] / prof.q[l]);
    }
    report.kl += prof.kl;
    ++report.users_evaluated;
    report.profiles.push_back(std::move(prof));
  }
  if (report.users_evaluated > 0) report.kl /= static_cast<Real>(report.users_evaluated);
  return report;
}

std::string format_real(Real v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::pair<std::string, Real>> named(const MetricRow& r) {
  return {{"f1", r.f1}, {"mrr", r.mrr}, {"ndcg", r.ndcg}, {"precision", r.precision}, {"recall", r.recall}};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace

void write_report_tsv(const std::string& path, const RankingReport& report, const KlReport* kl) {
  auto out = open_out(path);
  out << "metric\tn\tvalue\n";
  std::vector<MetricRow> rows = report.mean;
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  for (const auto& row : rows)
    for (const auto& [name, v] : named(row)) out << name << '\t' << row.n << '\t' << format_real(v) << '\n';
  out << "users_evaluated\t-\t" << report.users_evaluated << '\n';
  out << "users_skipped\t-\t" << report.users_skipped << '\n';
  if (kl) {
    out << "category_kl\t-\t" << format_real(kl->kl) << '\n';
    out << "kl_users\t-\t" << kl->users_evaluated << '\n';
  }
}

void write_report_json(const std::string& path, const RankingReport& report, const KlReport* kl) {
  nlohmann::ordered_json doc;
  doc["users_evaluated"] = report.users_evaluated;
  doc["users_skipped"] = report.users_skipped;
  auto& metrics = doc["metrics"] = nlohmann::ordered_json::array();
  for (const auto& row : report.mean)
    for (const auto& [name, v] : named(row))
      metrics.push_back({{"metric", name}, {"n", row.n}, {"value", v}});
  if (kl) {
    doc["category_kl"] = kl->kl;
    doc["kl_users"] = kl->users_evaluated;
  }
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_user_detail(const std::string& path, const RankingReport& report) {
  auto out = open_out(path);
  out << "user\tn\tprecision\trecall\tf1\tmrr\tndcg\n";
  for (const auto& u : report.per_user)
    for (const auto& r : u.rows)
      out << u.user << '\t' << r.n << '\t' << format_real(r.precision) << '\t'
          << format_real(r.recall) << '\t' << format_real(r.f1) << '\t' << format_real(r.mrr)
          << '\t' << format_real(r.ndcg) << '\n';
}

}  // namespace crossfuse
