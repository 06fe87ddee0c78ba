#include "dfsense/stmodel.hpp"

namespace dfsense {

StModelParams StModelParams::init(Index input_dim, Index hidden, Rng& rng) {
  StModelParams p;
  p.W_S.resize(input_dim, hidden);
  init_uniform(p.W_S, input_dim, rng);
  p.gru = GruParams(hidden, hidden);
  for (Matrix* w : {&p.gru.W_z, &p.gru.W_r, &p.gru.W_h}) init_uniform(*w, 2 * hidden, rng);
  p.W_out.resize(hidden, 1);
  init_uniform(p.W_out, hidden, rng);
  p.b_out = Matrix::Zero(1, 1);
  return p;
}

std::vector<NamedTensor> StModelParams::tensors() {
  std::vector<NamedTensor> out{{"W_S", &W_S}};
  for (auto& t : gru.tensors()) out.push_back({"gru." + t.name, t.value});
  out.push_back({"W_out", &W_out});
  out.push_back({"b_out", &b_out});
  return out;
}

std::vector<ConstNamedTensor> StModelParams::tensors() const {
  std::vector<ConstNamedTensor> out{{"W_S", &W_S}};
  for (const auto& t : gru.tensors()) out.push_back({"gru." + t.name, t.value});
  out.push_back({"W_out", &W_out});
  out.push_back({"b_out", &b_out});
  return out;
}

LinearReconParams LinearReconParams::init(Index n_cells, Index input_dim, Rng& rng) {
  LinearReconParams p;
  p.W.resize(n_cells * input_dim, n_cells);
  init_uniform(p.W, n_cells * input_dim, rng);
  p.b = Matrix::Zero(1, n_cells);
  return p;
}

std::vector<NamedTensor> LinearReconParams::tensors() { return {{"W", &W}, {"b", &b}}; }
std::vector<ConstNamedTensor> LinearReconParams::tensors() const { return {{"W", &W}, {"b", &b}}; }

Matrix build_inputs(const Observation& o, const Vector& z) {
  require_dims(o.rows() == z.size(), "build_inputs: rows");
  Matrix x(o.rows(), o.cols() + 1);
  x.leftCols(o.cols()) = o;
  x.col(o.cols()) = z;
  return x;
}

std::vector<Matrix> assemble_window(const Scenario& s, const Vector& z, Index steps) {
  require_dims(steps >= 1 && steps <= s.window(), "assemble_window: steps");
  std::vector<Matrix> frames;
  frames.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) frames.push_back(build_inputs(observe(s, z, t), z));
  return frames;
}

Vector placement_gradient(const Scenario& s, const std::vector<Matrix>& dinputs) {
  Vector dz = Vector::Zero(s.n_cells());
  for (std::size_t t = 0; t < dinputs.size(); ++t) {
    const Matrix& d = dinputs[t];
    dz += d.col(kFeatureDim + kInsituDim);
    dz += d.middleCols(kFeatureDim, kInsituDim).cwiseProduct(s.insitu[t]).rowwise().sum();
  }
  return dz;
}

Matrix gcn_forward(const SparseMatrix& norm_adj, const Matrix& x, const Matrix& W, GcnCache* cache) {
  require_dims(norm_adj.cols() == x.rows(), "gcn: adjacency vs input rows");
  require_dims(x.cols() == W.rows(), "gcn: input width vs W_S");
  Matrix ax = norm_adj * x;
  Matrix pre = ax * W;
  Matrix out = pre.cwiseMax(0.0);
  if (cache) {
    cache->ax = std::move(ax);
    cache->pre = std::move(pre);
    cache->out = out;
  }
  return out;
}

Matrix gcn_step(const SparseMatrix& norm_adj, const Matrix& x, const Matrix& W) {
  return gcn_forward(norm_adj, x, W, nullptr);
}

Matrix gcn_backward(const SparseMatrix& norm_adj, const GcnCache& c, const Matrix& W,
                    const Matrix& dout, Matrix& dW) {
  Matrix dpre = (c.pre.array() > 0.0).select(dout, 0.0);
  dW.noalias() += c.ax.transpose() * dpre;
  Matrix dax = dpre * W.transpose();
  return norm_adj.transpose() * dax;
}

Vector rollout(const SparseMatrix& norm_adj, const std::vector<Matrix>& inputs,
               const StModelParams& p, RolloutCache* cache) {
  if (inputs.empty()) throw DimensionError("rollout: need at least one time step");
  const Index n = inputs.front().rows();
  Matrix h = Matrix::Zero(n, p.gru.hidden_dim());
  if (cache) {
    cache->gcn.assign(inputs.size(), {});
    cache->gru.assign(inputs.size(), {});
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix s = gcn_forward(norm_adj, inputs[t], p.W_S, cache ? &cache->gcn[t] : nullptr);
    h = gru_forward(s, h, p.gru, cache ? &cache->gru[t] : nullptr);
  }
  Vector yhat = (h * p.W_out).col(0).array() + p.b_out(0, 0);
  check_finite(yhat, "rollout output");
  if (cache) cache->h_final = std::move(h);
  return yhat;
}

std::vector<Matrix> rollout_backward(const SparseMatrix& norm_adj, const RolloutCache& c,
                                     const Vector& dyhat, const StModelParams& p,
                                     StModelParams& grads) {
  grads.W_out.noalias() += c.h_final.transpose() * dyhat;
  grads.b_out(0, 0) += dyhat.sum();
  Matrix dh = dyhat * p.W_out.transpose();
  std::vector<Matrix> dinputs(c.gru.size());
  for (std::size_t t = c.gru.size(); t-- > 0;) {
    GruInputGrads g = gru_backward(c.gru[t], dh, p.gru, grads.gru);
    dinputs[t] = gcn_backward(norm_adj, c.gcn[t], p.W_S, g.dx, grads.W_S);
    dh = std::move(g.dh_prev);
  }
  return dinputs;
}

Vector linear_recon(const Matrix& last_input, const LinearReconParams& p) {
  const Index n = last_input.rows();
  require_dims(p.W.rows() == last_input.size() && p.W.cols() == n, "linear_recon: shapes");
  // Row-major storage makes the flattened frame a contiguous row vector.
  Eigen::Map<const RowVector> flat(last_input.data(), last_input.size());
  RowVector y = flat * p.W + p.b.row(0);
  check_finite(y, "linear reconstruction");
  return y.transpose();
}

Matrix linear_recon_backward(const Matrix& last_input, const Vector& dyhat,
                             const LinearReconParams& p, LinearReconParams& grads) {
  Eigen::Map<const RowVector> flat(last_input.data(), last_input.size());
  grads.W.noalias() += flat.transpose() * dyhat.transpose();
  grads.b += dyhat.transpose();
  RowVector dflat = dyhat.transpose() * p.W.transpose();
  Matrix dx(last_input.rows(), last_input.cols());
  Eigen::Map<RowVector>(dx.data(), dx.size()) = dflat;
  return dx;
}

double reconstruction_loss(const Vector& yhat, const Vector& y) {
  require_dims(yhat.size() == y.size(), "reconstruction_loss");
  return (yhat - y).squaredNorm() / static_cast<double>(y.size());
}

Vector reconstruction_loss_grad(const Vector& yhat, const Vector& y) {
  return 2.0 * (yhat - y) / static_cast<double>(y.size());
}

}  // namespace dfsense
