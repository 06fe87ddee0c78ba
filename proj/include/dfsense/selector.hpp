#pragma once
// Sensor selection: per-cell scoring MLP, Sum-of-Gamma perturb-and-MAP top-K
// sampling and the I-MLE surrogate gradient.

#include "dfsense/diffkit.hpp"
#include "dfsense/rng.hpp"

#include <vector>

namespace dfsense {

inline constexpr Index kScoringHidden = 64;

struct ScoringParams {
  Matrix W1, b1, W2, b2;

  static ScoringParams init(Index feature_dim, Index hidden, Rng& rng);
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

struct ScoringCache {
  Matrix x, pre, hidden;
};

/// Per-cell temporal mean of a window of N x d frames.
Matrix temporal_mean(const std::vector<Matrix>& frames);

/// theta_i = MLP(x_i); rows of x are cells.
Vector score_locations(const Matrix& x, const ScoringParams& p, ScoringCache* cache = nullptr);
/// Accumulates dL/dparams for upstream gradient dtheta.
void score_backward(const ScoringCache& cache, const Vector& dtheta, const ScoringParams& p,
                    ScoringParams& grads);

struct PlacementVector {
  Vector z;  // 0/1 flags
  Index k = 0;

  std::vector<Index> selected() const;
};

struct NoiseVector {
  Vector eps;
  double temperature = 1.0;
};

struct ImleConfig {
  double lambda = 10.0;
  Index sog_k = 10;
  Index s_terms = 10;
  Index samples = 1;
  double temperature = 1.0;
};

/// eps_i = (temp / sog_k) * (sum_{i=1..s} Gamma(1/sog_k, sog_k/i) - log s).
NoiseVector sample_sum_of_gamma(Index n, Index sog_k, Index s_terms, double temperature, Rng& rng);

/// Indicator of the k largest entries; ties go to the lower index.
PlacementVector map_top_k(const Vector& theta, Index k);

PlacementVector placement_from_cells(Index n, const std::vector<Index>& cells);

/// theta' = theta - lambda * grad_z.
Vector imle_target(const Vector& theta, const Vector& grad_z, double lambda);

/// z - z', both MAP states under the same noise draw.
Vector imle_gradient(const PlacementVector& z, const PlacementVector& z_target);

}  // namespace dfsense
