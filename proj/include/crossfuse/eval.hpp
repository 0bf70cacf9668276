#pragma once

#include <map>
#include <string>
#include <vector>

#include "crossfuse/data.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse {

/// The N highest-scoring items p_u . q_i outside `exclude` (sorted), by
/// descending score with ties broken by ascending item index. Returns the
/// whole candidate pool when it has fewer than N items.
std::vector<Index> rank_topn(const MatrixXr& user_vectors, const MatrixXr& item_vectors, Index user,
                             Index n, const std::vector<Index>& exclude = {});

/// Ranked lists keyed by user index.
using Recommendations = std::map<Index, std::vector<Index>>;

/// Top-N lists for every user with a non-empty `targets` entry, excluding
/// the union of the `seen` lists for that user.
Recommendations recommend(const MatrixXr& user_vectors, const MatrixXr& item_vectors, Index n,
                          const std::vector<std::vector<Index>>& targets,
                          const std::vector<const std::vector<std::vector<Index>>*>& seen);

struct MetricRow {
  int n = 0;
  Real precision = 0;
  Real recall = 0;
  Real f1 = 0;
  Real mrr = 0;
  Real ndcg = 0;
};

struct UserMetrics {
  Index user = 0;
  std::vector<MetricRow> rows;
};

struct RankingReport {
  std::vector<int> ns;
  /// Macro averages, one row per N.
  std::vector<MetricRow> mean;
  std::size_t users_evaluated = 0;
  /// Users with ground truth but no recommendation list.
  std::size_t users_skipped = 0;
  std::vector<UserMetrics> per_user;

  /// Named metric ("precision", "recall", "f1", "mrr", "ndcg") at N.
  Real value(const std::string& metric, int n) const;
};

/// Per-user truncated metrics averaged over users with at least one
/// ground-truth item. `truth[u]` must be sorted.
RankingReport ranking_metrics(const Recommendations& recs,
                              const std::vector<std::vector<Index>>& truth,
                              const std::vector<int>& ns, bool per_user = false);

struct CategoryProfile {
  Index user = 0;
  std::vector<Index> categories;  ///< top-K history categories
  std::vector<Real> p;            ///< history distribution
  std::vector<Real> q;            ///< smoothed recommendation distribution
  Real kl = 0;
};

struct KlReport {
  Real kl = 0;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::vector<CategoryProfile> profiles;
};

/// Mean over users of KL(p_u || q_u) restricted to each user's top-K history
/// categories (count ties broken by lower category index). Items count once
/// per category they carry; q gets `smoothing` added per category and is
/// renormalized. Users with no history or no recommendations are skipped.
KlReport category_kl(const std::vector<std::vector<Index>>& histories, const Recommendations& recs,
                     const std::vector<std::vector<Index>>& item_categories, Index k,
                     Real smoothing = 1e-9);

/// Shortest round-trip decimal form of a double.
std::string format_real(Real v);

/// metric, N, value lines (tab separated, with a header), sorted by N then
/// metric name; extra scalar lines follow.
void write_report_tsv(const std::string& path, const RankingReport& report,
                      const KlReport* kl = nullptr);
void write_report_json(const std::string& path, const RankingReport& report,
                       const KlReport* kl = nullptr);
void write_user_detail(const std::string& path, const RankingReport& report);

}  // namespace crossfuse
