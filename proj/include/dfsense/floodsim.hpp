#pragma once
// Synthetic flood scenarios: terrain, a diffusion-wave style water routing
// surrogate, remote-sensing features, in-situ readings and the two decision
// task instances (evacuation routing, aircraft relocation).

#include "dfsense/core.hpp"
#include "dfsense/graph.hpp"

#include <cstdint>
#include <vector>

namespace dfsense {

inline constexpr Index kFeatureDim = 4;  // precipitation, elevation, distance-to-water, roughness
inline constexpr Index kInsituDim = 2;   // depth, depth change since previous step

struct Terrain {
  Index rows = 0;
  Index cols = 0;
  Vector elevation;                  // m
  Vector roughness;                  // Manning-like, > 0
  std::vector<std::uint8_t> channel_mask;
  std::vector<Index> channel_path;   // channel cells ordered from inlet to outlet

  Index n_cells() const { return rows * cols; }
};

struct StormConfig {
  double amplitude = 1.0;        // intensity multiplier on every water source
  double peak_rain = 0.05;       // storm-centre rain at amplitude 1, m/step
  double base_rain_max = 0.004;  // uniform background rain upper bound, m/step
  double radius_min = 3.0;       // storm footprint, cells
  double radius_max = 8.0;
  double inflow_max = 1.5;       // upstream channel inflow at the inlet cell, m/step
  double antecedent_max = 1.0;   // initial channel water depth upper bound, m
};

struct ScenarioConfig {
  Index rows = 24;
  Index cols = 24;
  Index window = 10;        // T, recorded frames
  Index spinup_steps = 10;  // simulated before the first recorded frame
  double cell_size = 0.1;   // km; route lengths are in the same unit
  double dt = 1.0;
  double conductance = 0.05;
  StormConfig storm;
  std::uint64_t terrain_seed = 7;
  std::uint64_t seed = 0;   // storm realization
  // evacuation
  Index n_shelters = 4;
  Index routes_per_shelter = 2;
  long demand = 3200;
  long shelter_capacity = 1600;
  // relocation
  Index n_aircraft = 17;
  Index n_hangars = 17;
  // fixed (gauge-like) sensor sites along the channel
  Index n_fixed_sensors = 4;
  bool downslope_edges = false;
};

struct EvacTask {
  Index origin = 0;
  std::vector<std::vector<Index>> routes;  // cells traversed after leaving the origin
  std::vector<double> route_lengths;       // km
  std::vector<Index> shelter_of_route;
  std::vector<Index> shelter_cells;
  std::vector<long> shelter_caps;
  long demand = 0;
  double segment_length = 0.1;

  Index n_routes() const { return static_cast<Index>(routes.size()); }
  Index n_shelters() const { return static_cast<Index>(shelter_caps.size()); }
};

struct MatchTask {
  std::vector<Index> aircraft_cells;
  std::vector<Index> hangar_cells;
  std::vector<double> hangar_caps;

  Index n_aircraft() const { return static_cast<Index>(aircraft_cells.size()); }
  Index n_hangars() const { return static_cast<Index>(hangar_cells.size()); }
};

struct Scenario {
  ScenarioConfig config;
  Terrain terrain;
  Matrix depths;                 // T x N ground-truth depth, m
  std::vector<Matrix> features;  // T frames of N x kFeatureDim
  std::vector<Matrix> insitu;    // T frames of N x kInsituDim
  EvacTask evac;
  MatchTask match;
  std::vector<Index> fixed_sensor_cells;
  double mass_balance_rel_err = 0.0;

  Index window() const { return depths.rows(); }
  Index n_cells() const { return depths.cols(); }
  /// Depth at the last recorded frame (the nowcast target).
  Vector target() const { return depths.row(depths.rows() - 1).transpose(); }
  CellGraph graph() const;
};

/// N x (kFeatureDim + kInsituDim): [x_t, z * h_t].
using Observation = Matrix;

void validate(const ScenarioConfig& cfg);

Terrain generate_terrain(std::uint64_t seed, Index rows, Index cols);

/// One explicit routing step over the 4-neighbour lattice followed by the
/// source term. Closed boundaries; total volume changes only by the source.
Vector step_flood(const Vector& depth, const Terrain& terrain, const Vector& source, double dt,
                  double conductance = 0.05);

/// Lattice (4-neighbour) distance to the nearest channel cell.
Vector distance_to_channel(const Terrain& terrain);

Scenario run_scenario(const ScenarioConfig& cfg);

/// `count` storms over the same terrain and task layout; storm seeds are
/// derived from cfg.seed and the scenario index.
std::vector<Scenario> generate_suite(const ScenarioConfig& cfg, Index count);

Observation observe(const Scenario& s, const Vector& z, Index t);

}  // namespace dfsense
