#pragma once
// Spatio-temporal reconstruction: per-step graph convolution, a GRU run
// independently at every cell, and a linear decoder on the final state.

#include "dfsense/diffkit.hpp"
#include "dfsense/floodsim.hpp"
#include "dfsense/rng.hpp"

#include <vector>

namespace dfsense {

inline constexpr Index kStHidden = 16;
/// Columns of a model input frame: features, masked in-situ readings, z.
inline constexpr Index kInputDim = kFeatureDim + kInsituDim + 1;

struct StModelParams {
  Matrix W_S;  // input_dim x hidden
  GruParams gru;
  Matrix W_out;  // hidden x 1
  Matrix b_out;  // 1 x 1

  static StModelParams init(Index input_dim, Index hidden, Rng& rng);
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

/// Single dense layer from the flattened last input frame to all N cells
/// (the "no spatio-temporal module" ablation).
struct LinearReconParams {
  Matrix W;  // (N * input_dim) x N
  Matrix b;  // 1 x N

  static LinearReconParams init(Index n_cells, Index input_dim, Rng& rng);
  bool empty() const { return W.size() == 0; }
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

/// [o_t, z]: N x (d_o + 1).
Matrix build_inputs(const Observation& o, const Vector& z);

/// Model input frames for a placement z over the first `steps` frames.
std::vector<Matrix> assemble_window(const Scenario& s, const Vector& z, Index steps);

/// dL/dz from gradients on the assembled input frames. The in-situ columns
/// carry z * h, the last column carries z.
Vector placement_gradient(const Scenario& s, const std::vector<Matrix>& dinputs);

/// relu(A X W).
Matrix gcn_step(const SparseMatrix& norm_adj, const Matrix& x, const Matrix& W);

struct GcnCache {
  Matrix ax;   // A X
  Matrix pre;  // A X W
  Matrix out;
};

Matrix gcn_forward(const SparseMatrix& norm_adj, const Matrix& x, const Matrix& W, GcnCache* cache);
/// Accumulates dW; returns dL/dX.
Matrix gcn_backward(const SparseMatrix& norm_adj, const GcnCache& cache, const Matrix& W,
                    const Matrix& dout, Matrix& dW);

struct RolloutCache {
  std::vector<GcnCache> gcn;
  std::vector<GruCache> gru;
  Matrix h_final;
};

/// yhat over N cells after stepping through every input frame from h_0 = 0.
Vector rollout(const SparseMatrix& norm_adj, const std::vector<Matrix>& inputs,
               const StModelParams& p, RolloutCache* cache = nullptr);

/// Accumulates parameter gradients; returns dL/d(input frame) per step.
std::vector<Matrix> rollout_backward(const SparseMatrix& norm_adj, const RolloutCache& cache,
                                     const Vector& dyhat, const StModelParams& p,
                                     StModelParams& grads);

Vector linear_recon(const Matrix& last_input, const LinearReconParams& p);
/// Accumulates parameter gradients; returns dL/d(last input frame).
Matrix linear_recon_backward(const Matrix& last_input, const Vector& dyhat,
                             const LinearReconParams& p, LinearReconParams& grads);

/// Mean squared error over cells.
double reconstruction_loss(const Vector& yhat, const Vector& y);
Vector reconstruction_loss_grad(const Vector& yhat, const Vector& y);

}  // namespace dfsense
