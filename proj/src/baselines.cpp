#include "dfsense/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace dfsense {

PlacementVector fixed_placement(Index n_cells, const std::vector<Index>& cells) {
  return placement_from_cells(n_cells, cells);
}

PlacementVector pca_placement(const std::vector<Matrix>& frames, Index k) {
  if (frames.empty()) throw std::invalid_argument("pca_placement: no feature frames");
  const Index n = frames.front().rows();
  if (k < 1 || k > n) throw std::invalid_argument("pca_placement: k out of range");
  const Index d = frames.front().cols();
  Matrix F(n, d * static_cast<Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require_dims(frames[t].rows() == n && frames[t].cols() == d, "pca_placement: frame shape");
    F.middleCols(static_cast<Index>(t) * d, d) = frames[t];
  }
  F.rowwise() -= F.colwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? std::max(sv[0], 1.0) * 1e-10 : 0.0;
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  if (rank == 0) {
    std::cerr << "warning: pca_placement: features carry no variance, using lowest indices\n";
    std::vector<Index> cells(static_cast<std::size_t>(k));
    std::iota(cells.begin(), cells.end(), Index{0});
    return placement_from_cells(n, cells);
  }
  const Index r = std::min(k, rank);
  const Eigen::MatrixXd loadings_t = svd.matrixU().leftCols(r).transpose();  // r x N
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(loadings_t);
  const auto& perm = qr.colsPermutation().indices();

  std::vector<Index> cells;
  for (Index i = 0; i < r; ++i) cells.push_back(perm[i]);
  if (k > r) {
    // Beyond the numerical rank the pivots carry no information; fill by
    // leverage (row norm of the loadings), ties to the lower index.
    const Vector lev = loadings_t.colwise().squaredNorm().transpose();
    std::vector<Index> rest;
    for (Index i = 0; i < n; ++i) {
      if (std::find(cells.begin(), cells.end(), i) == cells.end()) rest.push_back(i);
    }
    std::stable_sort(rest.begin(), rest.end(), [&](Index a, Index b) { return lev[a] > lev[b]; });
    cells.insert(cells.end(), rest.begin(), rest.begin() + (k - r));
  }
  return placement_from_cells(n, cells);
}

// ---------------------------------------------------------------------------

Observed read_sensors(const Vector& field, const std::vector<Index>& cells) {
  Observed o;
  o.cells = cells;
  for (Index c : cells) {
    require_dims(c >= 0 && c < field.size(), "read_sensors: cell");
    o.values.push_back(field[c]);
  }
  return o;
}

Vector idw_impute(const Observed& obs, const CellGraph& g, double power) {
  if (obs.cells.empty()) throw std::invalid_argument("idw_impute: no observed cells");
  const Index n = g.n_cells();
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    bool exact = false;
    for (std::size_t s = 0; s < obs.cells.size(); ++s) {
      if (obs.cells[s] == i) {
        out[i] = obs.values[s];
        exact = true;
        break;
      }
      const double w = 1.0 / std::pow(g.distance(i, obs.cells[s]), power);
      num += w * obs.values[s];
      den += w;
    }
    if (!exact) out[i] = num / den;
  }
  return out;
}

Vector knn_impute(const Observed& obs, const CellGraph& g, Index k, double power) {
  const Index m = static_cast<Index>(obs.cells.size());
  if (k < 1 || k > m) throw std::invalid_argument("knn_impute: k must be in [1, observed count]");
  const Index n = g.n_cells();
  Vector out(n);
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::vector<double> dist(static_cast<std::size_t>(m));
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < m; ++s) dist[static_cast<std::size_t>(s)] = g.distance(i, obs.cells[static_cast<std::size_t>(s)]);
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
      return da < db || (da == db && obs.cells[static_cast<std::size_t>(a)] < obs.cells[static_cast<std::size_t>(b)]);
    });
    const auto first = static_cast<std::size_t>(order[0]);
    if (dist[first] == 0.0) {
      out[i] = obs.values[first];
      continue;
    }
    double num = 0.0, den = 0.0;
    for (Index j = 0; j < k; ++j) {
      const auto s = static_cast<std::size_t>(order[static_cast<std::size_t>(j)]);
      const double w = 1.0 / std::pow(dist[s], power);
      num += w * obs.values[s];
      den += w;
    }
    out[i] = num / den;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_evac_shapes(const Vector& c, const EvacTask& task) {
  require_dims(c.size() == task.n_routes(), "route cost length");
  long total = 0;
  for (long cap : task.shelter_caps) total += cap;
  if (total < task.demand) throw InfeasibleError("shelter capacity below demand");
}

std::vector<Index> ascending(const Vector& c) {
  std::vector<Index> order(static_cast<std::size_t>(c.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return c[a] < c[b]; });
  return order;
}

/// Spreads `amount` over routes with positive weight in proportion to the
/// weight, never pushing a shelter above `room`. Saturated shelters drop out
/// and the residual goes around again.
void water_fill(Vector& d, double amount, const Vector& weight, std::vector<double>& room,
                const EvacTask& task) {
  const Index P = task.n_routes();
  std::vector<bool> active(static_cast<std::size_t>(P));
  for (Index r = 0; r < P; ++r) {
    active[static_cast<std::size_t>(r)] =
        weight[r] > 0.0 && room[static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)])] > 0.0;
  }
  while (amount > 1e-12) {
    double wsum = 0.0;
    for (Index r = 0; r < P; ++r) {
      if (active[static_cast<std::size_t>(r)]) wsum += weight[r];
    }
    if (wsum <= 0.0) throw InfeasibleError("no route can absorb the remaining demand");
    Vector share = Vector::Zero(P);
    Vector load = Vector::Zero(task.n_shelters());
    for (Index r = 0; r < P; ++r) {
      if (!active[static_cast<std::size_t>(r)]) continue;
      share[r] = amount * weight[r] / wsum;
      load[task.shelter_of_route[static_cast<std::size_t>(r)]] += share[r];
    }
    bool saturated_any = false;
    for (Index j = 0; j < task.n_shelters(); ++j) {
      if (load[j] > room[static_cast<std::size_t>(j)] && load[j] > 0.0) saturated_any = true;
    }
    if (!saturated_any) {
      d += share;
      for (Index j = 0; j < task.n_shelters(); ++j) room[static_cast<std::size_t>(j)] -= load[j];
      return;
    }
    for (Index j = 0; j < task.n_shelters(); ++j) {
      const double cap = room[static_cast<std::size_t>(j)];
      if (!(load[j] > cap && load[j] > 0.0)) continue;
      for (Index r = 0; r < P; ++r) {
        if (task.shelter_of_route[static_cast<std::size_t>(r)] != j || !active[static_cast<std::size_t>(r)]) continue;
        d[r] += share[r] * cap / load[j];
        active[static_cast<std::size_t>(r)] = false;
      }
      amount -= cap;
      room[static_cast<std::size_t>(j)] = 0.0;
    }
  }
}

std::vector<double> capacities(const EvacTask& task) {
  std::vector<double> room;
  for (long cap : task.shelter_caps) room.push_back(static_cast<double>(cap));
  return room;
}

}  // namespace

ExactAllocation solve_evac_exact(const Vector& c, const EvacTask& task) {
  check_evac_shapes(c, task);
  std::vector<long> room = task.shelter_caps;
  ExactAllocation out;
  out.d.assign(static_cast<std::size_t>(task.n_routes()), 0);
  long remaining = task.demand;
  for (Index r : ascending(c)) {
    if (remaining == 0) break;
    auto& cap = room[static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)])];
    const long take = std::min(remaining, cap);
    out.d[static_cast<std::size_t>(r)] = take;
    cap -= take;
    remaining -= take;
  }
  out.cost = allocation_cost(out.d, c);
  return out;
}

Allocation inverse_weighted_evac(const Vector& c, const EvacTask& task) {
  check_evac_shapes(c, task);
  if ((c.array() <= 0.0).any()) throw std::invalid_argument("inverse_weighted_evac: costs must be positive");
  const Vector w = c.cwiseInverse() / c.cwiseInverse().sum();
  std::vector<double> room = capacities(task);
  Allocation a{Vector::Zero(task.n_routes())};
  water_fill(a.d, static_cast<double>(task.demand), w, room, task);
  return a;
}

ExactAllocation round_allocation(const Allocation& a, const EvacTask& task) {
  check_evac_shapes(Vector::Zero(task.n_routes()), task);
  require_dims(a.d.size() == task.n_routes(), "round_allocation: allocation length");
  Vector d = a.d.cwiseMax(0.0);
  if (d.sum() > 0.0) d *= static_cast<double>(task.demand) / d.sum();

  // clip
  std::vector<double> room = capacities(task);
  const Vector load = shelter_loads(d, task);
  double excess = 0.0;
  for (Index j = 0; j < task.n_shelters(); ++j) {
    const double cap = room[static_cast<std::size_t>(j)];
    if (load[j] > cap) {
      for (Index r = 0; r < task.n_routes(); ++r) {
        if (task.shelter_of_route[static_cast<std::size_t>(r)] == j) d[r] *= cap / load[j];
      }
      excess += load[j] - cap;
      room[static_cast<std::size_t>(j)] = 0.0;
    } else {
      room[static_cast<std::size_t>(j)] = cap - load[j];
    }
  }
  // redistribute
  if (excess > 0.0) {
    Vector weight = d;
    for (Index r = 0; r < task.n_routes(); ++r) {
      if (room[static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)])] <= 0.0) weight[r] = 0.0;
    }
    if (weight.sum() <= 0.0) {
      for (Index r = 0; r < task.n_routes(); ++r) {
        weight[r] = room[static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)])] > 0.0 ? 1.0 : 0.0;
      }
    }
    water_fill(d, excess, weight, room, task);
  }

  // largest remainder
  ExactAllocation out;
  out.d.resize(static_cast<std::size_t>(task.n_routes()));
  std::vector<long> int_room = task.shelter_caps;
  long assigned = 0;
  for (Index r = 0; r < task.n_routes(); ++r) {
    const auto j = static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)]);
    long v = static_cast<long>(std::floor(d[r] + 1e-9));
    v = std::min(v, int_room[j]);
    out.d[static_cast<std::size_t>(r)] = v;
    int_room[j] -= v;
    assigned += v;
  }
  std::vector<Index> order(static_cast<std::size_t>(task.n_routes()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
    return d[x] - std::floor(d[x]) > d[y] - std::floor(d[y]);
  });
  for (int pass = 0; pass < 2 && assigned < task.demand; ++pass) {
    for (Index r : order) {
      if (assigned >= task.demand) break;
      const auto j = static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)]);
      if (int_room[j] <= 0) continue;
      if (pass == 0 && d[r] - std::floor(d[r]) <= 1e-9) continue;
      ++out.d[static_cast<std::size_t>(r)];
      --int_room[j];
      ++assigned;
    }
  }
  while (assigned < task.demand) {
    // Only reachable when the soft allocation was all zero on open shelters.
    for (Index r = 0; r < task.n_routes() && assigned < task.demand; ++r) {
      const auto j = static_cast<std::size_t>(task.shelter_of_route[static_cast<std::size_t>(r)]);
      const long take = std::min(int_room[j], task.demand - assigned);
      out.d[static_cast<std::size_t>(r)] += take;
      int_room[j] -= take;
      assigned += take;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Hungarian algorithm with potentials, rows <= cols. Returns column per row.
std::vector<Index> hungarian(const Matrix& a) {
  const Index n = a.rows(), m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1)), v(static_cast<std::size_t>(m + 1));
  std::vector<Index> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(m + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> col_of(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) col_of[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return col_of;
}

double assignment_value(const Matrix& a, const std::vector<Index>& col_of) {
  double s = 0.0;
  for (std::size_t i = 0; i < col_of.size(); ++i) s += a(static_cast<Index>(i), col_of[i]);
  return s;
}

}  // namespace

Matching solve_matching_exact(const Matrix& c) {
  const Index m = c.rows(), l = c.cols();
  if (m > l) throw std::invalid_argument("solve_matching_exact: more aircraft than hangars");
  check_finite(c, "matching costs");
  Matching out;
  if (m == 0) return out;
  const double opt = assignment_value(c, hungarian(c));
  const double tol = 1e-9 * std::max(1.0, std::abs(opt));

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<Index> fixed;
  std::vector<bool> col_used(static_cast<std::size_t>(l), false);
  double fixed_cost = 0.0;
  for (Index i = 0; i < m; ++i) {
    bool placed = false;
    for (Index j = 0; j < l && !placed; ++j) {
      if (col_used[static_cast<std::size_t>(j)]) continue;
      double rest = 0.0;
      if (i + 1 < m) {
        std::vector<Index> free_cols;
        for (Index jj = 0; jj < l; ++jj) {
          if (!col_used[static_cast<std::size_t>(jj)] && jj != j) free_cols.push_back(jj);
        }
        Matrix sub(m - i - 1, static_cast<Index>(free_cols.size()));
        for (Index r = i + 1; r < m; ++r) {
          for (std::size_t k = 0; k < free_cols.size(); ++k) sub(r - i - 1, static_cast<Index>(k)) = c(r, free_cols[k]);
        }
        rest = assignment_value(sub, hungarian(sub));
      }
      if (fixed_cost + c(i, j) + rest <= opt + tol) {
        fixed.push_back(j);
        col_used[static_cast<std::size_t>(j)] = true;
        fixed_cost += c(i, j);
        placed = true;
      }
    }
    if (!placed) throw NumericError("solve_matching_exact: lexicographic refinement failed");
  }
  out.hangar_of = std::move(fixed);
  out.cost = matching_cost(out, c);
  return out;
}

Matching inverse_weighted_matching(const Matrix& c) {
  const Index m = c.rows(), l = c.cols();
  if (m > l) throw std::invalid_argument("inverse_weighted_matching: more aircraft than hangars");
  if ((c.array() <= 0.0).any()) throw std::invalid_argument("inverse_weighted_matching: costs must be positive");
  Matching out;
  std::vector<bool> used(static_cast<std::size_t>(l), false);
  for (Index i = 0; i < m; ++i) {
    Index best = -1;
    for (Index j = 0; j < l; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      if (best < 0 || 1.0 / c(i, j) > 1.0 / c(i, best)) best = j;
    }
    used[static_cast<std::size_t>(best)] = true;
    out.hangar_of.push_back(best);
  }
  out.cost = matching_cost(out, c);
  return out;
}

Matching extract_matching(const Matrix& P) {
  const Matrix neg_log = -(P.array().max(1e-300)).log().matrix();
  Matching m;
  if (P.rows() == 0) return m;
  m.hangar_of = hungarian(neg_log);
  return m;
}

double allocation_cost(const std::vector<long>& d, const Vector& c) {
  require_dims(static_cast<Index>(d.size()) == c.size(), "allocation_cost");
  double s = 0.0;
  for (std::size_t r = 0; r < d.size(); ++r) s += static_cast<double>(d[r]) * c[static_cast<Index>(r)];
  return s;
}

double matching_cost(const Matching& m, const Matrix& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.hangar_of.size(); ++i) {
    if (m.hangar_of[i] >= 0) s += c(static_cast<Index>(i), m.hangar_of[i]);
  }
  return s;
}

}  // namespace dfsense
