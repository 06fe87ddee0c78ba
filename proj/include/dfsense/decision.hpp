#pragma once
// Differentiable decision heads and their task losses.
//
// Evacuation: mean-pooled depth -> MLP -> softmax route shares, scaled by the
// demand, scored by travel cost plus a shelter overflow penalty.
// Relocation: pairwise MLP penalty scores -> log-domain Sinkhorn -> soft
// assignment, scored by relocation cost plus row/column overflow penalties.

#include "dfsense/diffkit.hpp"
#include "dfsense/floodsim.hpp"
#include "dfsense/graph.hpp"
#include "dfsense/rng.hpp"

#include <vector>

namespace dfsense {

enum class EvacPooling { global, per_route };

struct DecisionConfig {
  double gamma_assign = 10.0;
  double gamma_match = 10.0;
  Index sinkhorn_iters = 10;
  Index evac_mlp_hidden = 128;
  Index match_mlp_hidden = 32;
  double depth_cost_coeff = 5.0;   // per metre of depth
  double impact_weight = 1.0;      // w_f in the relocation cost
  Index impact_neighbors = 10;
  EvacPooling evac_pooling = EvacPooling::global;
};

void validate(const DecisionConfig& cfg);

// ---------------------------------------------------------------- evacuation

/// c_p = sum over segments of length * (1 + coeff * depth at the segment cell).
Vector route_costs(const Vector& y, const EvacTask& task, double depth_cost_coeff);

struct Allocation {
  Vector d;  // persons per route
};

struct EvacHeadParams {
  Matrix W1, b1, W2, b2;

  static EvacHeadParams init(Index input_dim, Index hidden, Index n_routes, Rng& rng);
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

struct EvacHeadCache {
  Matrix pooled;  // 1 x input_dim
  Matrix pre, hidden;
  RowVector p;
  EvacPooling pooling = EvacPooling::global;
};

Index evac_input_dim(const EvacTask& task, EvacPooling pooling);
Matrix evac_pool(const Vector& yhat, const EvacTask& task, EvacPooling pooling);

Allocation evac_head(const Vector& yhat, const EvacHeadParams& p, const EvacTask& task,
                     EvacPooling pooling = EvacPooling::global, EvacHeadCache* cache = nullptr);
/// Accumulates parameter gradients; returns dL/dyhat.
Vector evac_head_backward(const EvacHeadCache& cache, const Vector& dd, const EvacHeadParams& p,
                          const EvacTask& task, Index n_cells, EvacHeadParams& grads);

/// Per-shelter load sum_{p in P_j} d_p.
Vector shelter_loads(const Vector& d, const EvacTask& task);
double evac_overflow(const Vector& d, const EvacTask& task);

/// sum_p c_p d_p + gamma * sum_j relu(load_j - u_j).
double evac_loss(const Allocation& a, const Vector& c, const EvacTask& task, double gamma);
Vector evac_loss_grad(const Allocation& a, const Vector& c, const EvacTask& task, double gamma);

// ---------------------------------------------------------------- relocation

/// Inverse-square weighted mean of depth over each hangar's nearest cells,
/// as a sparse L x N operator. Distances are floored at half a cell width.
SparseMatrix build_impact_operator(const CellGraph& g, const MatchTask& task,
                                   Index n_neighbors = 10);

Vector hangar_impact(const Vector& y, const SparseMatrix& impact_op);

/// Aircraft-to-hangar centre distance divided by the grid diagonal, M x L.
Matrix normalized_distances(const CellGraph& g, const MatchTask& task);

/// c_ij = normalized distance + w_f * impact_j.
Matrix match_costs(const Vector& y, const Matrix& dist_norm, const SparseMatrix& impact_op,
                   double impact_weight);

struct MatchHeadParams {
  Matrix W1, b1, W2, b2;

  static MatchHeadParams init(Index hidden, Rng& rng);
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

struct MatchHeadCache {
  Matrix pairs;  // (M*L) x 2 rows of [impact_j, dist_ij]
  Matrix pre, hidden;
  Index m = 0, l = 0;
};

/// Penalty scores S (M x L) from [predicted impact_j, dist_ij] per pair.
Matrix match_head(const Vector& impact_hat, const Matrix& dist_norm, const MatchHeadParams& p,
                  MatchHeadCache* cache = nullptr);
/// Accumulates parameter gradients; returns dL/d(impact_hat).
Vector match_head_backward(const MatchHeadCache& cache, const Matrix& dS,
                           const MatchHeadParams& p, MatchHeadParams& grads);

struct SinkhornCache {
  std::vector<Matrix> after_row;  // log alpha after each row normalization
  std::vector<Matrix> after_col;  // log alpha after each column normalization
  Matrix P;
};

/// log alpha = -S, then `iters` rounds of row then column log-normalization.
/// Rows are normalized to 1; columns to M / L (1 for square inputs).
Matrix sinkhorn(const Matrix& S, Index iters, SinkhornCache* cache = nullptr);
Matrix sinkhorn_backward(const SinkhornCache& cache, const Matrix& dP);

/// sum c_ij P_ij + gamma * (sum_j relu(colsum_j - u_j) + sum_i relu(rowsum_i - 1)).
double match_loss(const Matrix& P, const Matrix& c, const std::vector<double>& caps, double gamma);
Matrix match_loss_grad(const Matrix& P, const Matrix& c, const std::vector<double>& caps,
                       double gamma);
double match_overflow(const Matrix& P, const std::vector<double>& caps);

}  // namespace dfsense
