#pragma once
// Non-learned comparators: fixed and PCA/QR sensor placement, IDW and KNN
// imputation, exact solvers for both decision tasks and inverse-cost
// heuristics, plus the cap-and-round projection for soft allocations.

#include "dfsense/decision.hpp"
#include "dfsense/floodsim.hpp"
#include "dfsense/graph.hpp"
#include "dfsense/selector.hpp"

#include <utility>
#include <vector>

namespace dfsense {

struct ExactAllocation {
  std::vector<long> d;
  double cost = 0.0;
};

struct Matching {
  std::vector<Index> hangar_of;  // per aircraft; -1 when unmatched
  double cost = 0.0;
};

// ---------------------------------------------------------------- placement

PlacementVector fixed_placement(Index n_cells, const std::vector<Index>& cells);

/// Column-pivoted QR on the top principal-component loadings of the
/// centred N x (frames * d) cell-feature matrix. Falls back to the lowest
/// indices (with a warning on stderr) when the features carry no variance.
PlacementVector pca_placement(const std::vector<Matrix>& frames, Index k);

// --------------------------------------------------------------- imputation

struct Observed {
  std::vector<Index> cells;
  std::vector<double> values;
};

Observed read_sensors(const Vector& field, const std::vector<Index>& cells);

/// Observed cells keep their own value.
Vector idw_impute(const Observed& obs, const CellGraph& g, double power = 2.0);
/// Inverse-distance mean over the k nearest observed cells; distance ties go
/// to the lower cell index.
Vector knn_impute(const Observed& obs, const CellGraph& g, Index k, double power = 2.0);

// ------------------------------------------------------------------ solvers

/// Optimal integer allocation by ascending route cost; each route takes what
/// its shelter can still absorb.
ExactAllocation solve_evac_exact(const Vector& c, const EvacTask& task);

/// Minimum-cost assignment of every aircraft (Hungarian). Among optimal
/// matchings the lexicographically smallest hangar sequence is returned.
Matching solve_matching_exact(const Matrix& c);

Allocation inverse_weighted_evac(const Vector& c, const EvacTask& task);
Matching inverse_weighted_matching(const Matrix& c);

/// Clip per-shelter loads to capacity, redistribute the excess over routes
/// of unsaturated shelters, then largest-remainder rounding.
ExactAllocation round_allocation(const Allocation& a, const EvacTask& task);

/// Hard matching from a soft assignment (maximum total log-probability).
Matching extract_matching(const Matrix& P);

double allocation_cost(const std::vector<long>& d, const Vector& c);
double matching_cost(const Matching& m, const Matrix& c);

}  // namespace dfsense
