#include "crossfuse/auxnet.hpp"

#include <cmath>
#include <string>

#include "crossfuse/error.hpp"
#include "crossfuse/fusion.hpp"
#include "crossfuse/graph.hpp"

namespace crossfuse {

namespace {

ParamRef buffer_ref(std::string name, RowVector<Real>& v) {
  return ParamRef{std::move(name), 1, v.size(),
                  std::span<Real>(v.data(), static_cast<std::size_t>(v.size())), {}};
}

}  // namespace

// ---------------------------------------------------------------- affine

AffineLayer::AffineLayer(Index in, Index out)
    : weight(MatrixXr::Zero(out, in)),
      weight_grad(MatrixXr::Zero(out, in)),
      bias(RowVector<Real>::Zero(out)),
      bias_grad(RowVector<Real>::Zero(out)) {
  if (in < 1 || out < 1) throw ConfigError("affine layer needs positive widths");
}

void AffineLayer::init(std::mt19937_64& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in()));
  std::uniform_real_distribution<Real> uni(-bound, bound);
  for (Index r = 0; r < weight.rows(); ++r)
    for (Index c = 0; c < weight.cols(); ++c) weight(r, c) = uni(rng);
  for (Index c = 0; c < bias.size(); ++c) bias(c) = uni(rng);
}

MatrixXr AffineLayer::forward(const MatrixXr& X) {
  if (X.cols() != in())
    throw DimensionError("affine layer expects width " + std::to_string(in()) + ", got " +
                         std::to_string(X.cols()));
  input_ = X;
  MatrixXr Y = X * weight.transpose();
  Y.rowwise() += bias;
  return Y;
}

MatrixXr AffineLayer::backward(const MatrixXr& dY) {
  weight_grad.noalias() += dY.transpose() * input_;
  bias_grad += dY.colwise().sum();
  return dY * weight;
}

void AffineLayer::collect(const std::string& prefix, ParamList& params) {
  params.push_back(param_ref(prefix + "weight", weight, weight_grad));
  params.push_back(param_ref(prefix + "bias", bias, bias_grad));
}

void AffineLayer::zero_grad() {
  weight_grad.setZero();
  bias_grad.setZero();
}

// ---------------------------------------------------------------- batch norm

BatchNorm::BatchNorm(Index width, Real momentum_, Real eps_)
    : gamma(RowVector<Real>::Ones(width)),
      gamma_grad(RowVector<Real>::Zero(width)),
      beta(RowVector<Real>::Zero(width)),
      beta_grad(RowVector<Real>::Zero(width)),
      running_mean(RowVector<Real>::Zero(width)),
      running_var(RowVector<Real>::Ones(width)),
      momentum(momentum_),
      eps(eps_) {}

MatrixXr BatchNorm::forward(const MatrixXr& X, Mode mode) {
  if (X.cols() != gamma.size()) throw DimensionError("batch norm width mismatch");
  mode_ = mode;
  const Index n = X.rows();
  if (mode == Mode::Train) {
    if (n < 2) throw DataError("batch normalization needs at least 2 rows in train mode");
    const RowVector<Real> mean = X.colwise().mean();
    const MatrixXr centered = X.rowwise() - mean;
    const RowVector<Real> var = centered.colwise().squaredNorm() / static_cast<Real>(n);
    inv_std_ = (var.array() + eps).rsqrt().matrix();
    xhat_ = centered.array().rowwise() * inv_std_.array();
    running_mean = (1 - momentum) * running_mean + momentum * mean;
    running_var = (1 - momentum) * running_var +
                  momentum * (var * (static_cast<Real>(n) / static_cast<Real>(n - 1)));
  } else {
    inv_std_ = (running_var.array() + eps).rsqrt().matrix();
    xhat_ = (X.rowwise() - running_mean).array().rowwise() * inv_std_.array();
  }
  MatrixXr Y = xhat_.array().rowwise() * gamma.array();
  Y.rowwise() += beta;
  return Y;
}

MatrixXr BatchNorm::backward(const MatrixXr& dY) {
  gamma_grad += (dY.array() * xhat_.array()).matrix().colwise().sum();
  beta_grad += dY.colwise().sum();
  const MatrixXr dxhat = dY.array().rowwise() * gamma.array();
  if (mode_ == Mode::Eval) return dxhat.array().rowwise() * inv_std_.array();
  const auto n = static_cast<Real>(dY.rows());
  const RowVector<Real> sum_d = dxhat.colwise().sum();
  const RowVector<Real> sum_dx = (dxhat.array() * xhat_.array()).matrix().colwise().sum();
  MatrixXr dX = (n * dxhat).rowwise() - sum_d;
  dX.array() -= xhat_.array().rowwise() * sum_dx.array();
  dX.array().rowwise() *= (inv_std_ / n).array();
  return dX;
}

void BatchNorm::collect(const std::string& prefix, ParamList& params) {
  params.push_back(param_ref(prefix + "gamma", gamma, gamma_grad));
  params.push_back(param_ref(prefix + "beta", beta, beta_grad));
}

void BatchNorm::collect_buffers(const std::string& prefix, ParamList& buffers) {
  buffers.push_back(buffer_ref(prefix + "running_mean", running_mean));
  buffers.push_back(buffer_ref(prefix + "running_var", running_var));
}

void BatchNorm::zero_grad() {
  gamma_grad.setZero();
  beta_grad.setZero();
}

// ---------------------------------------------------------------- dense block

DenseBlock::DenseBlock(Index in, Index out, Real momentum, Real eps)
    : affine(in, out), norm(out, momentum, eps) {}

MatrixXr DenseBlock::forward(const MatrixXr& X, Mode mode) {
  MatrixXr Y = norm.forward(affine.forward(X), mode);
  mask_ = (Y.array() > 0.0).cast<Real>();
  return Y.cwiseMax(0.0);
}

MatrixXr DenseBlock::backward(const MatrixXr& dY) {
  return affine.backward(norm.backward(dY.cwiseProduct(mask_)));
}

void DenseBlock::collect(const std::string& prefix, ParamList& params) {
  affine.collect(prefix, params);
  norm.collect(prefix + "bn.", params);
}

void DenseBlock::zero_grad() {
  affine.zero_grad();
  norm.zero_grad();
}

// ---------------------------------------------------------------- config

void AuxNetConfig::validate() const {
  if (dim < 1) throw ConfigError("auxnet.dim must be >= 1");
  for (Index h : hidden)
    if (h < 1) throw ConfigError("auxnet.hidden widths must be >= 1");
  if (gcn_layers < 0) throw ConfigError("auxnet.gcn_layers must be >= 0");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("auxnet.bn_momentum must lie in (0, 1]");
  if (!(bn_eps > 0)) throw ConfigError("auxnet.bn_eps must be > 0");
}

// ---------------------------------------------------------------- encoder

AuxEncoder::AuxEncoder(Index input_dim, const AuxNetConfig& cfg) {
  cfg.validate();
  if (input_dim < 1) throw DimensionError("auxiliary input has no columns");
  Index width = input_dim;
  for (Index h : cfg.hidden) {
    blocks.emplace_back(width, h, cfg.bn_momentum, cfg.bn_eps);
    width = h;
  }
  projection = AffineLayer(width, cfg.dim);
}

void AuxEncoder::init(std::mt19937_64& rng) {
  for (auto& b : blocks) b.init(rng);
  projection.init(rng);
}

Index AuxEncoder::input_dim() const {
  return blocks.empty() ? projection.in() : blocks.front().affine.in();
}

MatrixXr AuxEncoder::forward(const MatrixXr& X, Mode mode) {
  if (X.cols() != input_dim())
    throw DimensionError("auxiliary features have " + std::to_string(X.cols()) +
                         " columns, encoder expects " + std::to_string(input_dim()));
  MatrixXr H = X;
  for (auto& b : blocks) H = b.forward(H, mode);
  return projection.forward(H);
}

MatrixXr AuxEncoder::backward(const MatrixXr& dA) {
  MatrixXr d = projection.backward(dA);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) d = it->backward(d);
  return d;
}

void AuxEncoder::collect(const std::string& prefix, ParamList& params) {
  for (std::size_t l = 0; l < blocks.size(); ++l)
    blocks[l].collect(prefix + "mlp" + std::to_string(l) + ".", params);
  projection.collect(prefix + "proj.", params);
}

void AuxEncoder::collect_buffers(const std::string& prefix, ParamList& buffers) {
  for (std::size_t l = 0; l < blocks.size(); ++l)
    blocks[l].collect_buffers(prefix + "mlp" + std::to_string(l) + ".", buffers);
}

void AuxEncoder::zero_grad() {
  for (auto& b : blocks) b.zero_grad();
  projection.zero_grad();
}

// ---------------------------------------------------------------- gcn

AuxGcnStack::AuxGcnStack(Index layers, Index dim, Real momentum, Real eps) {
  for (Index k = 0; k < layers; ++k) blocks.emplace_back(dim, dim, momentum, eps);
}

void AuxGcnStack::init(std::mt19937_64& rng) {
  for (auto& b : blocks) b.init(rng);
}

MatrixXr AuxGcnStack::forward(const SparseXr& sim, const MatrixXr& A0, Mode mode) {
  if (sim.rows() != sim.cols() || sim.cols() != A0.rows())
    throw DimensionError("similarity graph is " + std::to_string(sim.rows()) + "x" +
                         std::to_string(sim.cols()) + " but features have " +
                         std::to_string(A0.rows()) + " rows");
  sim_ = &sim;
  MatrixXr A = A0;
  for (auto& b : blocks) A = b.forward(propagate(sim, A), mode);
  return A;
}

MatrixXr AuxGcnStack::backward(const MatrixXr& dA) {
  MatrixXr d = dA;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
    d = propagate_transpose(*sim_, it->backward(d));
  return d;
}

void AuxGcnStack::collect(const std::string& prefix, ParamList& params) {
  for (std::size_t k = 0; k < blocks.size(); ++k)
    blocks[k].collect(prefix + "gcn" + std::to_string(k) + ".", params);
}

void AuxGcnStack::collect_buffers(const std::string& prefix, ParamList& buffers) {
  for (std::size_t k = 0; k < blocks.size(); ++k)
    blocks[k].collect_buffers(prefix + "gcn" + std::to_string(k) + ".", buffers);
}

void AuxGcnStack::zero_grad() {
  for (auto& b : blocks) b.zero_grad();
}

// ---------------------------------------------------------------- towers

AuxTower::AuxTower(MatrixXr features, std::shared_ptr<const SparseXr> sim,
                   const AuxNetConfig& cfg)
    : encoder(features.cols(), cfg),
      gcn(cfg.gcn_layers, cfg.dim, cfg.bn_momentum, cfg.bn_eps),
      features_(std::move(features)),
      sim_(std::move(sim)) {
  if (!sim_) throw OrderingError("auxiliary tower needs a similarity graph");
  if (sim_->rows() != features_.rows() || sim_->cols() != features_.rows())
    throw DimensionError("similarity graph covers " + std::to_string(sim_->rows()) +
                         " nodes, feature matrix has " + std::to_string(features_.rows()));
}

void AuxTower::init(std::mt19937_64& rng) {
  encoder.init(rng);
  gcn.init(rng);
}

MatrixXr AuxTower::forward(Mode mode) {
  return gcn.forward(*sim_, encoder.forward(features_, mode), mode);
}

void AuxTower::backward(const MatrixXr& dA) { encoder.backward(gcn.backward(dA)); }

void AuxTower::collect(const std::string& prefix, ParamList& params) {
  encoder.collect(prefix, params);
  gcn.collect(prefix, params);
}

void AuxTower::collect_buffers(const std::string& prefix, ParamList& buffers) {
  encoder.collect_buffers(prefix, buffers);
  gcn.collect_buffers(prefix, buffers);
}

void AuxTower::zero_grad() {
  encoder.zero_grad();
  gcn.zero_grad();
}

AuxModel::AuxModel(AuxTower users, AuxTower items)
    : user_tower(std::move(users)), item_tower(std::move(items)) {
  if (user_tower.encoder.output_dim() != item_tower.encoder.output_dim())
    throw DimensionError("user and item towers must emit the same dimension");
}

void AuxModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  user_tower.init(rng);
  item_tower.init(rng);
}

Features AuxModel::forward(Mode mode) {
  const MatrixXr au = user_tower.forward(mode);
  const MatrixXr ai = item_tower.forward(mode);
  MatrixXr stacked(au.rows() + ai.rows(), au.cols());
  stacked << au, ai;
  return Features(std::move(stacked), au.rows());
}

Real AuxModel::stage1_loss_and_grad(std::span<const Rated> batch) {
  if (batch.empty()) throw DataError("stage-1 batch is empty");
  const Features A = forward(Mode::Train);
  output_grad_ = Features(A.n_users, A.n_items(), A.dim());
  const Real loss = dot_mse_loss(A, batch, &output_grad_);
  user_tower.backward(output_grad_.users());
  item_tower.backward(output_grad_.items());
  return loss;
}

ParamList AuxModel::params() {
  ParamList out;
  user_tower.collect("user.", out);
  item_tower.collect("item.", out);
  return out;
}

ParamList AuxModel::buffers() {
  ParamList out;
  user_tower.collect_buffers("user.", out);
  item_tower.collect_buffers("item.", out);
  return out;
}

void AuxModel::zero_grad() {
  user_tower.zero_grad();
  item_tower.zero_grad();
}

std::size_t AuxModel::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.value.size();
  return n;
}

}  // namespace crossfuse
