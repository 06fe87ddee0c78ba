#pragma once

#include "dfsense/core.hpp"

#include <utility>
#include <vector>

namespace dfsense {

enum class AdjacencyNorm { sym, row };

/// Candidate sensor locations on a regular lattice.
struct CellGraph {
  Index rows = 0;
  Index cols = 0;
  double cell_size = 1.0;
  std::vector<std::pair<Index, Index>> edges;  // undirected, i < j, no self-edges
  SparseMatrix norm_adj;                       // N x N

  Index n_cells() const { return rows * cols; }
  Index row_of(Index cell) const { return cell / cols; }
  Index col_of(Index cell) const { return cell % cols; }
  Index cell_at(Index r, Index c) const { return r * cols + c; }
  /// Real-valued cell centre (x along columns, y along rows).
  std::pair<double, double> center(Index cell) const {
    return {(static_cast<double>(col_of(cell)) + 0.5) * cell_size,
            (static_cast<double>(row_of(cell)) + 0.5) * cell_size};
  }
  double distance(Index a, Index b) const;
  std::vector<std::vector<Index>> neighbors() const;
};

/// 4-neighbour lattice with symmetric-normalized adjacency.
CellGraph build_grid_graph(Index rows, Index cols, double cell_size = 1.0);

/// sym: D^-1/2 (A + I) D^-1/2; row: D^-1 (A + I).
SparseMatrix normalize_adjacency(const CellGraph& g, AdjacencyNorm mode = AdjacencyNorm::sym);

/// Adds diagonal edges between cells whose elevations differ (downslope
/// connectivity) and refreshes norm_adj.
void add_downslope_edges(CellGraph& g, const Vector& elevation,
                         AdjacencyNorm mode = AdjacencyNorm::sym);

/// Graph over an arbitrary edge list, used for non-lattice test fixtures.
CellGraph build_custom_graph(Index n, std::vector<std::pair<Index, Index>> edges,
                             AdjacencyNorm mode = AdjacencyNorm::sym);

}  // namespace dfsense
