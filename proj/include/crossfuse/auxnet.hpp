#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crossfuse/types.hpp"

namespace crossfuse {

enum class Mode { Train, Eval };

/// Y = X W^T + b over row samples.
class AffineLayer {
 public:
  AffineLayer() = default;
  AffineLayer(Index in, Index out);

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and biases.
  void init(std::mt19937_64& rng);

  MatrixXr forward(const MatrixXr& X);
  MatrixXr backward(const MatrixXr& dY);

  Index in() const { return weight.cols(); }
  Index out() const { return weight.rows(); }

  void collect(const std::string& prefix, ParamList& params);
  void zero_grad();

  MatrixXr weight, weight_grad;
  RowVector<Real> bias, bias_grad;

 private:
  MatrixXr input_;
};

/// Per-column batch normalization with learnable scale and shift.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(Index width, Real momentum = 0.1, Real eps = 1e-5);

  /// Train mode uses the batch mean and biased variance and folds the
  /// unbiased variance into the running estimate; eval mode uses the
  /// running estimates.
  MatrixXr forward(const MatrixXr& X, Mode mode);
  MatrixXr backward(const MatrixXr& dY);

  void collect(const std::string& prefix, ParamList& params);
  void collect_buffers(const std::string& prefix, ParamList& buffers);
  void zero_grad();

  RowVector<Real> gamma, gamma_grad, beta, beta_grad;
  RowVector<Real> running_mean, running_var;
  Real momentum = 0.1;
  Real eps = 1e-5;

 private:
  Mode mode_ = Mode::Eval;
  MatrixXr xhat_;
  RowVector<Real> inv_std_;
};

/// Affine, batch-norm, rectifier.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(Index in, Index out, Real momentum = 0.1, Real eps = 1e-5);

  void init(std::mt19937_64& rng) { affine.init(rng); }
  MatrixXr forward(const MatrixXr& X, Mode mode);
  MatrixXr backward(const MatrixXr& dY);

  void collect(const std::string& prefix, ParamList& params);
  void collect_buffers(const std::string& prefix, ParamList& buffers) {
    norm.collect_buffers(prefix + "bn.", buffers);
  }
  void zero_grad();

  AffineLayer affine;
  BatchNorm norm;

 private:
  MatrixXr mask_;
};

struct AuxNetConfig {
  /// Hidden widths of the reduction MLP; the final affine maps to `dim`.
  /// {256} is a two-layer MLP, {} a single affine map.
  std::vector<Index> hidden{256};
  Index dim = 64;
  /// Similarity-GCN layers; 0 returns the MLP output directly.
  Index gcn_layers = 2;
  Real bn_momentum = 0.1;
  Real bn_eps = 1e-5;

  void validate() const;
};

/// Reduction MLP: hidden DenseBlocks, then an affine projection with no
/// normalization or activation.
class AuxEncoder {
 public:
  AuxEncoder() = default;
  AuxEncoder(Index input_dim, const AuxNetConfig& cfg);

  void init(std::mt19937_64& rng);
  MatrixXr forward(const MatrixXr& X, Mode mode);
  MatrixXr backward(const MatrixXr& dA);

  Index input_dim() const;
  Index output_dim() const { return projection.out(); }

  void collect(const std::string& prefix, ParamList& params);
  void collect_buffers(const std::string& prefix, ParamList& buffers);
  void zero_grad();

  std::vector<DenseBlock> blocks;
  AffineLayer projection;
};

/// a(k) = f_k(S a(k-1)) with a d -> d DenseBlock per layer.
class AuxGcnStack {
 public:
  AuxGcnStack() = default;
  AuxGcnStack(Index layers, Index dim, Real momentum = 0.1, Real eps = 1e-5);

  void init(std::mt19937_64& rng);
  MatrixXr forward(const SparseXr& sim, const MatrixXr& A0, Mode mode);
  MatrixXr backward(const MatrixXr& dA);

  Index layers() const { return static_cast<Index>(blocks.size()); }

  void collect(const std::string& prefix, ParamList& params);
  void collect_buffers(const std::string& prefix, ParamList& buffers);
  void zero_grad();

  std::vector<DenseBlock> blocks;

 private:
  const SparseXr* sim_ = nullptr;
};

/// Encoder plus GCN for one side (users or items) over its similarity graph.
class AuxTower {
 public:
  AuxTower() = default;
  AuxTower(MatrixXr features, std::shared_ptr<const SparseXr> sim, const AuxNetConfig& cfg);

  void init(std::mt19937_64& rng);
  MatrixXr forward(Mode mode);
  void backward(const MatrixXr& dA);

  Index nodes() const { return features_.rows(); }
  const MatrixXr& features() const { return features_; }
  const SparseXr& similarity() const { return *sim_; }

  void collect(const std::string& prefix, ParamList& params);
  void collect_buffers(const std::string& prefix, ParamList& buffers);
  void zero_grad();

  AuxEncoder encoder;
  AuxGcnStack gcn;

 private:
  MatrixXr features_;
  std::shared_ptr<const SparseXr> sim_;
};

/// User and item towers. forward() stacks their outputs in node order.
class AuxModel {
 public:
  AuxModel() = default;
  AuxModel(AuxTower users, AuxTower items);

  void init(std::uint64_t seed);
  Features forward(Mode mode);

  /// sum (a_u . a_i - r)^2 over the batch, backpropagated into every
  /// parameter gradient. Runs a train-mode forward pass itself.
  Real stage1_loss_and_grad(std::span<const Rated> batch);

  /// Gradient w.r.t. the stacked output of the last forward pass, as
  /// computed by the most recent stage1_loss_and_grad call.
  const Features& output_grad() const { return output_grad_; }

  ParamList params();
  ParamList buffers();
  void zero_grad();
  std::size_t parameter_count();

  AuxTower user_tower;
  AuxTower item_tower;

 private:
  Features output_grad_;
};

}  // namespace crossfuse
