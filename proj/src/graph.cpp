#include "dfsense/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dfsense {

double CellGraph::distance(Index a, Index b) const {
  const auto [xa, ya] = center(a);
  const auto [xb, yb] = center(b);
  return std::hypot(xa - xb, ya - yb);
}

std::vector<std::vector<Index>> CellGraph::neighbors() const {
  std::vector<std::vector<Index>> nb(static_cast<std::size_t>(n_cells()));
  for (const auto& [a, b] : edges) {
    nb[static_cast<std::size_t>(a)].push_back(b);
    nb[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& v : nb) std::sort(v.begin(), v.end());
  return nb;
}

SparseMatrix normalize_adjacency(const CellGraph& g, AdjacencyNorm mode) {
  const Index n = g.n_cells();
  Vector degree = Vector::Ones(n);  // self-loop
  for (const auto& [a, b] : g.edges) {
    degree[a] += 1.0;
    degree[b] += 1.0;
  }
  auto weight = [&](Index i, Index j) {
    return mode == AdjacencyNorm::sym ? 1.0 / std::sqrt(degree[i] * degree[j]) : 1.0 / degree[i];
  };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n + 2 * static_cast<Index>(g.edges.size())));
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, weight(i, i));
  for (const auto& [a, b] : g.edges) {
    trip.emplace_back(a, b, weight(a, b));
    trip.emplace_back(b, a, weight(b, a));
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

CellGraph build_grid_graph(Index rows, Index cols, double cell_size) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid dimensions must be >= 1");
  CellGraph g;
  g.rows = rows;
  g.cols = cols;
  g.cell_size = cell_size;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = g.cell_at(r, c);
      if (c + 1 < cols) g.edges.emplace_back(i, g.cell_at(r, c + 1));
      if (r + 1 < rows) g.edges.emplace_back(i, g.cell_at(r + 1, c));
    }
  }
  g.norm_adj = normalize_adjacency(g, AdjacencyNorm::sym);
  return g;
}

void add_downslope_edges(CellGraph& g, const Vector& elevation, AdjacencyNorm mode) {
  require_dims(elevation.size() == g.n_cells(), "add_downslope_edges: elevation length");
  std::set<std::pair<Index, Index>> present(g.edges.begin(), g.edges.end());
  for (Index r = 0; r + 1 < g.rows; ++r) {
    for (Index c = 0; c < g.cols; ++c) {
      const Index i = g.cell_at(r, c);
      for (Index dc : {Index{-1}, Index{1}}) {
        if (c + dc < 0 || c + dc >= g.cols) continue;
        const Index j = g.cell_at(r + 1, c + dc);
        if (elevation[i] == elevation[j]) continue;
        const auto e = std::minmax(i, j);
        if (present.insert({e.first, e.second}).second) g.edges.emplace_back(e.first, e.second);
      }
    }
  }
  g.norm_adj = normalize_adjacency(g, mode);
}

CellGraph build_custom_graph(Index n, std::vector<std::pair<Index, Index>> edges,
                             AdjacencyNorm mode) {
  if (n < 1) throw std::invalid_argument("graph needs at least one node");
  CellGraph g;
  g.rows = 1;
  g.cols = n;
  for (auto& [a, b] : edges) {
    if (a == b || a < 0 || b < 0 || a >= n || b >= n) {
      throw std::invalid_argument("invalid edge in custom graph");
    }
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.norm_adj = normalize_adjacency(g, mode);
  return g;
}

}  // namespace dfsense
