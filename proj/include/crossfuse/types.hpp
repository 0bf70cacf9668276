#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace crossfuse {

using Index = Eigen::Index;
using Real = double;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Compressed row storage. Column indices are sorted within each row once
/// the matrix is compressed, and builders in this library never store zeros.
template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

using MatrixXr = Matrix<Real>;
using VectorXr = Vector<Real>;
using SparseXr = SparseMatrix<Real>;

/// Per-node features for a bipartite user/item graph. Users occupy rows
/// [0, n_users) and items rows [n_users, n_users + n_items), matching the
/// node order of the normalized bipartite adjacency.
template <typename Scalar>
struct NodeFeatures {
  Matrix<Scalar> nodes;
  Index n_users = 0;

  NodeFeatures() = default;
  NodeFeatures(Matrix<Scalar> values, Index users)
      : nodes(std::move(values)), n_users(users) {}
  NodeFeatures(Index users, Index items, Index dim)
      : nodes(Matrix<Scalar>::Zero(users + items, dim)), n_users(users) {}

  Index n_items() const { return nodes.rows() - n_users; }
  Index dim() const { return nodes.cols(); }

  auto users() { return nodes.topRows(n_users); }
  auto users() const { return nodes.topRows(n_users); }
  auto items() { return nodes.bottomRows(n_items()); }
  auto items() const { return nodes.bottomRows(n_items()); }

  auto user(Index u) { return nodes.row(u); }
  auto user(Index u) const { return nodes.row(u); }
  auto item(Index i) { return nodes.row(n_users + i); }
  auto item(Index i) const { return nodes.row(n_users + i); }
};

using Features = NodeFeatures<Real>;

/// View over one trainable tensor: values and the gradient buffer of the
/// same shape, both in column-major Eigen order.
struct ParamRef {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::span<Real> value;
  std::span<Real> grad;
};

template <typename Derived>
ParamRef param_ref(std::string name, Eigen::PlainObjectBase<Derived>& value,
                   Eigen::PlainObjectBase<Derived>& grad) {
  return ParamRef{std::move(name), value.rows(), value.cols(),
                  std::span<Real>(value.data(), static_cast<std::size_t>(value.size())),
                  std::span<Real>(grad.data(), static_cast<std::size_t>(grad.size()))};
}

using ParamList = std::vector<ParamRef>;

struct UserItem {
  Index user = 0;
  Index item = 0;
};

struct Rated {
  Index user = 0;
  Index item = 0;
  Real rating = 0;
};

struct BprTriple {
  Index user = 0;
  Index positive = 0;
  Index negative = 0;
};

}  // namespace crossfuse
