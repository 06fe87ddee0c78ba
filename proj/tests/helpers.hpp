#pragma once
// Test-side oracles and fixtures, independent of the library's own helpers.

#include "dfsense/core.hpp"
#include "dfsense/floodsim.hpp"
#include "dfsense/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace testing {

using dfsense::Index;
using dfsense::Matrix;
using dfsense::Vector;

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Central differences over every entry of x.
inline Matrix central_diff(const std::function<double(const Matrix&)>& f, const Matrix& x, double eps = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double v = xp.data()[i];
    xp.data()[i] = v + eps;
    const double fp = f(xp);
    xp.data()[i] = v - eps;
    const double fm = f(xp);
    xp.data()[i] = v;
    g.data()[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Largest elementwise |a - b| / max(|a|, |b|, floor).
inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), floor});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / den);
  }
  return worst;
}

/// Evacuation task with one single-cell route per entry of shelter_of_route.
inline dfsense::EvacTask make_evac_task(const std::vector<Index>& shelter_of_route,
                                        const std::vector<long>& caps, long demand) {
  dfsense::EvacTask t;
  t.origin = 0;
  for (std::size_t r = 0; r < shelter_of_route.size(); ++r) {
    t.routes.push_back({static_cast<Index>(r)});
    t.route_lengths.push_back(1.0);
  }
  t.shelter_of_route = shelter_of_route;
  for (std::size_t j = 0; j < caps.size(); ++j) t.shelter_cells.push_back(static_cast<Index>(j));
  t.shelter_caps = caps;
  t.demand = demand;
  t.segment_length = 1.0;
  return t;
}

/// Small default-shaped scenario for fast tests.
inline dfsense::ScenarioConfig small_config() {
  dfsense::ScenarioConfig c;
  c.rows = 8;
  c.cols = 8;
  c.window = 4;
  c.spinup_steps = 4;
  c.n_aircraft = 5;
  c.n_hangars = 5;
  c.demand = 40;
  c.shelter_capacity = 20;
  return c;
}

}  // namespace testing
