#include "dfsense/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dfsense {

ScoringParams ScoringParams::init(Index feature_dim, Index hidden, Rng& rng) {
  ScoringParams p;
  p.W1.resize(feature_dim, hidden);
  p.b1 = Matrix::Zero(1, hidden);
  p.W2.resize(hidden, 1);
  p.b2 = Matrix::Zero(1, 1);
  init_uniform(p.W1, feature_dim, rng);
  init_uniform(p.W2, hidden, rng);
  return p;
}

std::vector<NamedTensor> ScoringParams::tensors() {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}

std::vector<ConstNamedTensor> ScoringParams::tensors() const {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}

Matrix temporal_mean(const std::vector<Matrix>& frames) {
  if (frames.empty()) throw DimensionError("temporal_mean: empty window");
  Matrix m = frames.front();
  for (std::size_t t = 1; t < frames.size(); ++t) {
    require_dims(frames[t].rows() == m.rows() && frames[t].cols() == m.cols(), "temporal_mean: frame shape");
    m += frames[t];
  }
  return m / static_cast<double>(frames.size());
}

Vector score_locations(const Matrix& x, const ScoringParams& p, ScoringCache* cache) {
  require_dims(x.cols() == p.W1.rows(), "score_locations: feature width");
  Matrix pre = linear_forward(x, p.W1, p.b1.row(0));
  Matrix hidden = activation(pre, Activation::relu);
  Vector theta = linear_forward(hidden, p.W2, p.b2.row(0)).col(0);
  check_finite(theta, "location scores");
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return theta;
}

void score_backward(const ScoringCache& c, const Vector& dtheta, const ScoringParams& p,
                    ScoringParams& grads) {
  const Matrix dy = dtheta;
  LayerGrad out = linear_backward(c.hidden, p.W2, dy);
  grads.W2 += out.params["W"];
  grads.b2 += out.params["b"];
  Matrix dpre = activation_backward(c.pre, c.hidden, out.input, Activation::relu);
  LayerGrad in = linear_backward(c.x, p.W1, dpre);
  grads.W1 += in.params["W"];
  grads.b1 += in.params["b"];
}

std::vector<Index> PlacementVector::selected() const {
  std::vector<Index> out;
  for (Index i = 0; i < z.size(); ++i) {
    if (z[i] > 0.5) out.push_back(i);
  }
  return out;
}

NoiseVector sample_sum_of_gamma(Index n, Index sog_k, Index s_terms, double temperature, Rng& rng) {
  if (sog_k < 1 || s_terms < 1) throw std::invalid_argument("sum-of-gamma needs sog_k, s_terms >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("sum-of-gamma temperature must be > 0");
  const double k = static_cast<double>(sog_k);
  std::vector<std::gamma_distribution<double>> terms;
  terms.reserve(static_cast<std::size_t>(s_terms));
  for (Index i = 1; i <= s_terms; ++i) terms.emplace_back(1.0 / k, k / static_cast<double>(i));
  const double log_s = std::log(static_cast<double>(s_terms));

  NoiseVector out;
  out.temperature = temperature;
  out.eps.resize(n);
  for (Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (auto& g : terms) acc += g(rng);
    out.eps[j] = (temperature / k) * (acc - log_s);
  }
  return out;
}

PlacementVector map_top_k(const Vector& theta, Index k) {
  const Index n = theta.size();
  if (k < 1 || k > n) throw std::invalid_argument("map_top_k: k out of range");
  check_finite(theta, "map_top_k scores");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
    return theta[a] > theta[b] || (theta[a] == theta[b] && a < b);
  });
  PlacementVector p;
  p.k = k;
  p.z = Vector::Zero(n);
  for (Index i = 0; i < k; ++i) p.z[idx[static_cast<std::size_t>(i)]] = 1.0;
  return p;
}

PlacementVector placement_from_cells(Index n, const std::vector<Index>& cells) {
  PlacementVector p;
  p.z = Vector::Zero(n);
  for (Index c : cells) {
    if (c < 0 || c >= n) throw std::invalid_argument("placement cell out of range");
    if (p.z[c] != 0.0) throw std::invalid_argument("duplicate placement cell");
    p.z[c] = 1.0;
  }
  p.k = static_cast<Index>(cells.size());
  return p;
}

Vector imle_target(const Vector& theta, const Vector& grad_z, double lambda) {
  require_dims(theta.size() == grad_z.size(), "imle_target");
  return theta - lambda * grad_z;
}

Vector imle_gradient(const PlacementVector& z, const PlacementVector& z_target) {
  require_dims(z.z.size() == z_target.z.size(), "imle_gradient: length");
  require_dims(z.k == z_target.k, "imle_gradient: budget");
  return z.z - z_target.z;
}

}  // namespace dfsense
