#include "dfsense/decision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dfsense {

void validate(const DecisionConfig& cfg) {
  if (!(cfg.gamma_assign > 0) || !(cfg.gamma_match > 0)) throw ConfigError("penalty weights must be positive");
  if (cfg.sinkhorn_iters < 1) throw ConfigError("sinkhorn_iters must be >= 1");
  if (cfg.evac_mlp_hidden < 1 || cfg.match_mlp_hidden < 1) throw ConfigError("head widths must be >= 1");
  if (cfg.depth_cost_coeff < 0 || cfg.impact_weight < 0) throw ConfigError("cost coefficients must be >= 0");
  if (cfg.impact_neighbors < 1) throw ConfigError("impact_neighbors must be >= 1");
}

// ---------------------------------------------------------------------------

Vector route_costs(const Vector& y, const EvacTask& task, double depth_cost_coeff) {
  Vector c(task.n_routes());
  for (Index p = 0; p < task.n_routes(); ++p) {
    double total = 0.0;
    for (Index cell : task.routes[static_cast<std::size_t>(p)]) {
      require_dims(cell >= 0 && cell < y.size(), "route_costs: route cell");
      total += task.segment_length * (1.0 + depth_cost_coeff * y[cell]);
    }
    c[p] = total;
  }
  return c;
}

EvacHeadParams EvacHeadParams::init(Index input_dim, Index hidden, Index n_routes, Rng& rng) {
  EvacHeadParams p;
  p.W1.resize(input_dim, hidden);
  init_uniform(p.W1, input_dim, rng);
  p.b1 = Matrix::Zero(1, hidden);
  p.W2.resize(hidden, n_routes);
  init_uniform(p.W2, hidden, rng);
  p.b2 = Matrix::Zero(1, n_routes);
  return p;
}

std::vector<NamedTensor> EvacHeadParams::tensors() {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}
std::vector<ConstNamedTensor> EvacHeadParams::tensors() const {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}

Index evac_input_dim(const EvacTask& task, EvacPooling pooling) {
  return pooling == EvacPooling::global ? 1 : task.n_routes();
}

Matrix evac_pool(const Vector& yhat, const EvacTask& task, EvacPooling pooling) {
  if (pooling == EvacPooling::global) return Matrix::Constant(1, 1, yhat.mean());
  Matrix pooled(1, task.n_routes());
  for (Index r = 0; r < task.n_routes(); ++r) {
    const auto& cells = task.routes[static_cast<std::size_t>(r)];
    double s = 0.0;
    for (Index c : cells) s += yhat[c];
    pooled(0, r) = cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
  }
  return pooled;
}

Allocation evac_head(const Vector& yhat, const EvacHeadParams& p, const EvacTask& task,
                     EvacPooling pooling, EvacHeadCache* cache) {
  require_dims(p.W2.cols() == task.n_routes(), "evac_head: route count");
  Matrix pooled = evac_pool(yhat, task, pooling);
  require_dims(pooled.cols() == p.W1.rows(), "evac_head: input width");
  Matrix pre = linear_forward(pooled, p.W1, p.b1.row(0));
  Matrix hidden = activation(pre, Activation::relu);
  RowVector s = linear_forward(hidden, p.W2, p.b2.row(0)).row(0);
  RowVector prob = softmax(s);
  Allocation a{static_cast<double>(task.demand) * prob.transpose()};
  check_finite(a.d, "evacuation allocation");
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->p = std::move(prob);
    cache->pooling = pooling;
  }
  return a;
}

Vector evac_head_backward(const EvacHeadCache& c, const Vector& dd, const EvacHeadParams& p,
                          const EvacTask& task, Index n_cells, EvacHeadParams& grads) {
  const RowVector dprob = static_cast<double>(task.demand) * dd.transpose();
  const Matrix ds = softmax_backward(c.p, dprob);
  LayerGrad out = linear_backward(c.hidden, p.W2, ds);
  grads.W2 += out.params["W"];
  grads.b2 += out.params["b"];
  Matrix dpre = activation_backward(c.pre, c.hidden, out.input, Activation::relu);
  LayerGrad in = linear_backward(c.pooled, p.W1, dpre);
  grads.W1 += in.params["W"];
  grads.b1 += in.params["b"];

  Vector dy = Vector::Zero(n_cells);
  if (c.pooling == EvacPooling::global) {
    dy.setConstant(in.input(0, 0) / static_cast<double>(n_cells));
  } else {
    for (Index r = 0; r < task.n_routes(); ++r) {
      const auto& cells = task.routes[static_cast<std::size_t>(r)];
      if (cells.empty()) continue;
      const double g = in.input(0, r) / static_cast<double>(cells.size());
      for (Index cell : cells) dy[cell] += g;
    }
  }
  return dy;
}

Vector shelter_loads(const Vector& d, const EvacTask& task) {
  require_dims(d.size() == task.n_routes(), "shelter_loads: allocation length");
  Vector load = Vector::Zero(task.n_shelters());
  for (Index r = 0; r < task.n_routes(); ++r) load[task.shelter_of_route[static_cast<std::size_t>(r)]] += d[r];
  return load;
}

double evac_overflow(const Vector& d, const EvacTask& task) {
  const Vector load = shelter_loads(d, task);
  double over = 0.0;
  for (Index j = 0; j < task.n_shelters(); ++j) {
    over += std::max(0.0, load[j] - static_cast<double>(task.shelter_caps[static_cast<std::size_t>(j)]));
  }
  return over;
}

double evac_loss(const Allocation& a, const Vector& c, const EvacTask& task, double gamma) {
  require_dims(c.size() == a.d.size(), "evac_loss: cost length");
  return c.dot(a.d) + gamma * evac_overflow(a.d, task);
}

Vector evac_loss_grad(const Allocation& a, const Vector& c, const EvacTask& task, double gamma) {
  const Vector load = shelter_loads(a.d, task);
  Vector g = c;
  for (Index r = 0; r < task.n_routes(); ++r) {
    const auto j = static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)]);
    if (load[static_cast<Index>(j)] > static_cast<double>(task.shelter_caps[j])) g[r] += gamma;
  }
  return g;
}

// ---------------------------------------------------------------------------

SparseMatrix build_impact_operator(const CellGraph& g, const MatchTask& task, Index n_neighbors) {
  const Index n = g.n_cells();
  if (n < n_neighbors) throw std::invalid_argument("hangar impact needs at least n_neighbors cells");
  const double floor = 0.5 * g.cell_size;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Index j = 0; j < task.n_hangars(); ++j) {
    const Index h = task.hangar_cells[static_cast<std::size_t>(j)];
    for (Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = g.distance(h, i);
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + n_neighbors, idx.end(), [&](Index a, Index b) {
      const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
      return da < db || (da == db && a < b);
    });
    double wsum = 0.0;
    std::vector<double> w(static_cast<std::size_t>(n_neighbors));
    for (Index k = 0; k < n_neighbors; ++k) {
      const double d = std::max(dist[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])], floor);
      w[static_cast<std::size_t>(k)] = 1.0 / (d * d);
      wsum += w[static_cast<std::size_t>(k)];
    }
    for (Index k = 0; k < n_neighbors; ++k) {
      trip.emplace_back(j, idx[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)] / wsum);
    }
  }
  SparseMatrix op(task.n_hangars(), n);
  op.setFromTriplets(trip.begin(), trip.end());
  op.makeCompressed();
  return op;
}

Vector hangar_impact(const Vector& y, const SparseMatrix& impact_op) {
  require_dims(impact_op.cols() == y.size(), "hangar_impact: field length");
  return impact_op * y;
}

Matrix normalized_distances(const CellGraph& g, const MatchTask& task) {
  const double diag = std::hypot(static_cast<double>(g.rows), static_cast<double>(g.cols)) * g.cell_size;
  Matrix d(task.n_aircraft(), task.n_hangars());
  for (Index i = 0; i < task.n_aircraft(); ++i) {
    for (Index j = 0; j < task.n_hangars(); ++j) {
      d(i, j) = g.distance(task.aircraft_cells[static_cast<std::size_t>(i)],
                           task.hangar_cells[static_cast<std::size_t>(j)]) / diag;
    }
  }
  return d;
}

Matrix match_costs(const Vector& y, const Matrix& dist_norm, const SparseMatrix& impact_op,
                   double impact_weight) {
  const Vector impact = hangar_impact(y, impact_op);
  require_dims(impact.size() == dist_norm.cols(), "match_costs: hangar count");
  Matrix c = dist_norm;
  c.rowwise() += impact_weight * impact.transpose();
  return c;
}

MatchHeadParams MatchHeadParams::init(Index hidden, Rng& rng) {
  MatchHeadParams p;
  p.W1.resize(2, hidden);
  init_uniform(p.W1, 2, rng);
  p.b1 = Matrix::Zero(1, hidden);
  p.W2.resize(hidden, 1);
  init_uniform(p.W2, hidden, rng);
  p.b2 = Matrix::Zero(1, 1);
  return p;
}

std::vector<NamedTensor> MatchHeadParams::tensors() {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}
std::vector<ConstNamedTensor> MatchHeadParams::tensors() const {
  return {{"W1", &W1}, {"b1", &b1}, {"W2", &W2}, {"b2", &b2}};
}

Matrix match_head(const Vector& impact_hat, const Matrix& dist_norm, const MatchHeadParams& p,
                  MatchHeadCache* cache) {
  const Index m = dist_norm.rows(), l = dist_norm.cols();
  require_dims(impact_hat.size() == l, "match_head: hangar count");
  Matrix pairs(m * l, 2);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < l; ++j) {
      pairs(i * l + j, 0) = impact_hat[j];
      pairs(i * l + j, 1) = dist_norm(i, j);
    }
  }
  Matrix pre = linear_forward(pairs, p.W1, p.b1.row(0));
  Matrix hidden = activation(pre, Activation::relu);
  Matrix flat = linear_forward(hidden, p.W2, p.b2.row(0));
  Matrix S = Eigen::Map<const Matrix>(flat.data(), m, l);
  check_finite(S, "match scores");
  if (cache) {
    cache->pairs = std::move(pairs);
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->m = m;
    cache->l = l;
  }
  return S;
}

Vector match_head_backward(const MatchHeadCache& c, const Matrix& dS, const MatchHeadParams& p,
                           MatchHeadParams& grads) {
  const Matrix dflat = Eigen::Map<const Matrix>(dS.data(), c.m * c.l, 1);
  LayerGrad out = linear_backward(c.hidden, p.W2, dflat);
  grads.W2 += out.params["W"];
  grads.b2 += out.params["b"];
  Matrix dpre = activation_backward(c.pre, c.hidden, out.input, Activation::relu);
  LayerGrad in = linear_backward(c.pairs, p.W1, dpre);
  grads.W1 += in.params["W"];
  grads.b1 += in.params["b"];
  Vector dimpact = Vector::Zero(c.l);
  for (Index i = 0; i < c.m; ++i) {
    for (Index j = 0; j < c.l; ++j) dimpact[j] += in.input(i * c.l + j, 0);
  }
  return dimpact;
}

namespace {

void normalize_rows(Matrix& la) {
  for (Index i = 0; i < la.rows(); ++i) la.row(i).array() -= logsumexp(la.row(i));
}

void normalize_cols(Matrix& la, double log_target) {
  for (Index j = 0; j < la.cols(); ++j) la.col(j).array() -= logsumexp(la.col(j)) - log_target;
}

}  // namespace

Matrix sinkhorn(const Matrix& S, Index iters, SinkhornCache* cache) {
  check_finite(S, "sinkhorn scores");
  if (iters < 1) throw std::invalid_argument("sinkhorn needs at least one iteration");
  const double log_target = std::log(static_cast<double>(S.rows()) / static_cast<double>(S.cols()));
  Matrix la = -S;
  if (cache) {
    cache->after_row.clear();
    cache->after_col.clear();
  }
  for (Index t = 0; t < iters; ++t) {
    normalize_rows(la);
    if (cache) cache->after_row.push_back(la);
    normalize_cols(la, log_target);
    if (cache) cache->after_col.push_back(la);
  }
  Matrix P = la.array().exp().matrix();
  if (cache) cache->P = P;
  return P;
}

Matrix sinkhorn_backward(const SinkhornCache& c, const Matrix& dP) {
  // y = x - lse(x) along an axis  =>  dx = dy - softmax(x) * sum(dy) along it,
  // and softmax(x) = exp(y) up to the constant column target.
  Matrix d = dP.cwiseProduct(c.P);
  for (std::size_t t = c.after_col.size(); t-- > 0;) {
    const Matrix& yc = c.after_col[t];
    const Matrix& yr = c.after_row[t];
    // column step: softmax of the pre-column state equals exp(yc) / target
    const double target = static_cast<double>(yc.rows()) / static_cast<double>(yc.cols());
    const RowVector colsum = d.colwise().sum();
    d -= (yc.array().exp() / target).matrix().cwiseProduct(colsum.replicate(yc.rows(), 1));
    const Vector rowsum = d.rowwise().sum();
    d -= yr.array().exp().matrix().cwiseProduct(rowsum.replicate(1, yr.cols()));
  }
  return -d;
}

namespace {

void check_match_shapes(const Matrix& P, const Matrix& c, const std::vector<double>& caps) {
  require_dims(P.rows() == c.rows() && P.cols() == c.cols(), "match_loss: cost shape");
  require_dims(static_cast<Index>(caps.size()) == P.cols(), "match_loss: capacity count");
}

}  // namespace

double match_overflow(const Matrix& P, const std::vector<double>& caps) {
  const RowVector cols = P.colwise().sum();
  const Vector rows = P.rowwise().sum();
  double over = 0.0;
  for (Index j = 0; j < P.cols(); ++j) over += std::max(0.0, cols[j] - caps[static_cast<std::size_t>(j)]);
  for (Index i = 0; i < P.rows(); ++i) over += std::max(0.0, rows[i] - 1.0);
  return over;
}

double match_loss(const Matrix& P, const Matrix& c, const std::vector<double>& caps, double gamma) {
  check_match_shapes(P, c, caps);
  return c.cwiseProduct(P).sum() + gamma * match_overflow(P, caps);
}

Matrix match_loss_grad(const Matrix& P, const Matrix& c, const std::vector<double>& caps,
                       double gamma) {
  check_match_shapes(P, c, caps);
  const RowVector cols = P.colwise().sum();
  const Vector rows = P.rowwise().sum();
  Matrix g = c;
  for (Index i = 0; i < P.rows(); ++i) {
    for (Index j = 0; j < P.cols(); ++j) {
      if (cols[j] > caps[static_cast<std::size_t>(j)]) g(i, j) += gamma;
      if (rows[i] > 1.0) g(i, j) += gamma;
    }
  }
  return g;
}

}  // namespace dfsense
