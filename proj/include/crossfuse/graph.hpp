#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "crossfuse/data.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/types.hpp"

namespace crossfuse {

enum class Axis { Rows, Columns };

enum class SimilarityNorm {
  /// dot / (|a| |b|); unit self-similarity.
  Cosine,
  /// dot / (|a|^2 |b|^2), the literal squared-norm variant. Off-diagonal
  /// values shrink with degree; the diagonal is still stored as 1.
  SquaredNorm,
};

struct SimilarityOptions {
  SimilarityNorm norm = SimilarityNorm::Cosine;
  /// Keep at most this many off-diagonal neighbours per node after
  /// thresholding (0 = unbounded). The result is re-symmetrized by union.
  Index max_neighbors = 0;
};

struct GraphReport {
  /// Nodes with no interactions; they only carry a unit self-loop (similarity
  /// graphs) or an empty row (bipartite adjacency).
  std::vector<Index> isolated;
};

/// Train-split interaction matrix R (users x items).
template <typename Scalar = Real>
SparseMatrix<Scalar> interaction_matrix(const InteractionDataset& ds, bool binary = false) {
  std::vector<Eigen::Triplet<Scalar>> entries;
  for (const auto& r : ds.records()) {
    if (r.split != Split::Train) continue;
    const Scalar v = binary ? Scalar(1) : static_cast<Scalar>(r.rating);
    if (v != Scalar(0)) entries.emplace_back(r.user, r.item, v);
  }
  SparseMatrix<Scalar> R(ds.n_users(), ds.n_items());
  R.setFromTriplets(entries.begin(), entries.end());
  R.makeCompressed();
  return R;
}

/// Thresholded similarity graph over the rows (users) or columns (items) of
/// R, computed on the presence pattern of R. Entry (u, v) is kept when the
/// similarity is at least `epsilon`; every node gets a unit diagonal.
template <typename Scalar>
SparseMatrix<Scalar> build_similarity_graph(const SparseMatrix<Scalar>& R, Axis axis, Scalar epsilon,
                                            const SimilarityOptions& opts = {},
                                            GraphReport* report = nullptr) {
  if (!(epsilon >= Scalar(0) && epsilon <= Scalar(1)))
    throw ConfigError("similarity threshold must lie in [0, 1]");
  SparseMatrix<Scalar> M = axis == Axis::Rows ? SparseMatrix<Scalar>(R)
                                              : SparseMatrix<Scalar>(R.transpose());
  M.makeCompressed();
  const Index nodes = M.rows();
  const Index width = M.cols();

  // Presence pattern: node -> attributes and attribute -> nodes.
  std::vector<std::vector<Index>> by_node(static_cast<std::size_t>(nodes));
  std::vector<std::vector<Index>> by_attr(static_cast<std::size_t>(width));
  for (Index u = 0; u < nodes; ++u) {
    for (typename SparseMatrix<Scalar>::InnerIterator it(M, u); it; ++it) {
      if (it.value() < Scalar(0)) throw DataError("similarity input must be non-negative");
      if (it.value() == Scalar(0)) continue;
      by_node[static_cast<std::size_t>(u)].push_back(it.col());
      by_attr[static_cast<std::size_t>(it.col())].push_back(u);
    }
  }

  GraphReport local;
  std::vector<Eigen::Triplet<Scalar>> entries;
  std::vector<Index> overlap(static_cast<std::size_t>(nodes), 0);
  std::vector<Index> touched;
  std::vector<std::pair<Scalar, Index>> row;
  for (Index u = 0; u < nodes; ++u) {
    entries.emplace_back(u, u, Scalar(1));
    const auto& attrs = by_node[static_cast<std::size_t>(u)];
    if (attrs.empty()) {
      local.isolated.push_back(u);
      continue;
    }
    touched.clear();
    for (Index a : attrs)
      for (Index v : by_attr[static_cast<std::size_t>(a)])
        if (overlap[static_cast<std::size_t>(v)]++ == 0) touched.push_back(v);
    std::sort(touched.begin(), touched.end());

    const auto du = static_cast<Scalar>(attrs.size());
    row.clear();
    for (Index v : touched) {
      const auto dot = static_cast<Scalar>(overlap[static_cast<std::size_t>(v)]);
      overlap[static_cast<std::size_t>(v)] = 0;
      if (v == u) continue;
      const auto dv = static_cast<Scalar>(by_node[static_cast<std::size_t>(v)].size());
      // Operand order is irrelevant: IEEE multiplication commutes, so
      // s(u, v) == s(v, u) bit for bit.
      const Scalar s = opts.norm == SimilarityNorm::Cosine
                           ? dot / (std::sqrt(du) * std::sqrt(dv))
                           : dot / (du * dv);
      if (s >= epsilon && s > Scalar(0)) row.emplace_back(s, v);
    }
    if (opts.max_neighbors > 0 && static_cast<Index>(row.size()) > opts.max_neighbors) {
      std::partial_sort(row.begin(), row.begin() + opts.max_neighbors, row.end(),
                        [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                        });
      row.resize(static_cast<std::size_t>(opts.max_neighbors));
    }
    for (const auto& [s, v] : row) {
      entries.emplace_back(u, v, s);
      if (opts.max_neighbors > 0) entries.emplace_back(v, u, s);
    }
  }

  SparseMatrix<Scalar> S(nodes, nodes);
  S.setFromTriplets(entries.begin(), entries.end(), [](const Scalar& a, const Scalar&) { return a; });
  S.makeCompressed();
  if (report) *report = std::move(local);
  return S;
}

/// Symmetrically normalized bipartite adjacency over n + m nodes (users
/// first): edge (u, n + i) weighs 1 / sqrt(d_u d_i). No self-loops.
template <typename Scalar = Real>
SparseMatrix<Scalar> normalize_bipartite(const InteractionDataset& ds, GraphReport* report = nullptr) {
  const Index n = ds.n_users();
  const Index m = ds.n_items();
  std::vector<Eigen::Triplet<Scalar>> entries;
  GraphReport local;
  for (Index u = 0; u < n; ++u) {
    const auto du = static_cast<Scalar>(ds.user_degree(u));
    if (ds.user_degree(u) == 0) local.isolated.push_back(u);
    for (Index i : ds.user_items(u)) {
      const auto di = static_cast<Scalar>(ds.item_degree(i));
      const Scalar w = Scalar(1) / std::sqrt(du * di);
      entries.emplace_back(u, n + i, w);
      entries.emplace_back(n + i, u, w);
    }
  }
  for (Index i = 0; i < m; ++i)
    if (ds.item_degree(i) == 0) local.isolated.push_back(n + i);
  SparseMatrix<Scalar> A(n + m, n + m);
  A.setFromTriplets(entries.begin(), entries.end());
  A.makeCompressed();
  if (report) *report = std::move(local);
  return A;
}

/// One aggregation step: adj * X.
template <typename Scalar, typename Derived>
Matrix<Scalar> propagate(const SparseMatrix<Scalar>& adj, const Eigen::MatrixBase<Derived>& X) {
  if (adj.cols() != X.rows())
    throw DimensionError("propagate: adjacency has " + std::to_string(adj.cols()) +
                         " columns but features have " + std::to_string(X.rows()) + " rows");
  return adj * X;
}

/// Transpose-side step used by backward passes: adj^T * X.
template <typename Scalar, typename Derived>
Matrix<Scalar> propagate_transpose(const SparseMatrix<Scalar>& adj,
                                   const Eigen::MatrixBase<Derived>& X) {
  if (adj.rows() != X.rows())
    throw DimensionError("propagate_transpose: adjacency has " + std::to_string(adj.rows()) +
                         " rows but gradients have " + std::to_string(X.rows()) + " rows");
  return adj.transpose() * X;
}

/// Checks compressed, sorted, zero-free, finite storage.
template <typename Scalar>
bool csr_invariants_hold(const SparseMatrix<Scalar>& S) {
  if (!S.isCompressed()) return false;
  for (Index r = 0; r < S.outerSize(); ++r) {
    Index prev = -1;
    for (typename SparseMatrix<Scalar>::InnerIterator it(S, r); it; ++it) {
      if (it.col() <= prev) return false;
      if (it.value() == Scalar(0) || !std::isfinite(static_cast<double>(it.value()))) return false;
      prev = it.col();
    }
  }
  return true;
}

/// Binary CSR file: "CFSP" magic, u32 version, u64 rows, cols, nnz, then
/// i64 row offsets (rows + 1), i64 column indices, f64 values, all
/// little-endian.
void save_sparse(const std::string& path, const SparseXr& S);
SparseXr load_sparse(const std::string& path);

inline constexpr std::uint32_t kSparseFormatVersion = 1;

}  // namespace crossfuse
