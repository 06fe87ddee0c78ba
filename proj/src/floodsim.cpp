#include "dfsense/floodsim.hpp"

#include "dfsense/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace dfsense {

namespace {

constexpr double kChannelRoughness = 0.035;
constexpr double kCarveDepth = 1.0;
constexpr double kValleySlope = 0.15;  // m per cell away from the channel
constexpr double kTilt = 2.0;          // m drop from inlet column to outlet column
constexpr Index kMaxSubsteps = 100000;

struct Wave {
  double amp, fx, fy, phase;
};

std::vector<Wave> random_waves(Rng& rng, int count, double amp_total) {
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  std::vector<Wave> waves;
  for (int m = 0; m < count; ++m) {
    waves.push_back({amp_total / count, freq(rng) * (sign(rng) < 0 ? -1 : 1), freq(rng),
                     phase(rng)});
  }
  return waves;
}

double eval_waves(const std::vector<Wave>& waves, double u, double v) {
  double s = 0.0;
  for (const auto& w : waves) s += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
  return s;
}

template <typename F>
void for_each_lattice_edge(Index rows, Index cols, F&& f) {
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      if (c + 1 < cols) f(i, i + 1);
      if (r + 1 < rows) f(i, i + cols);
    }
  }
}

std::vector<Index> l_path(Index r0, Index c0, Index r1, Index c1, Index cols, bool row_first) {
  std::vector<Index> path;
  Index r = r0, c = c0;
  auto walk_cols = [&] {
    while (c != c1) {
      c += (c1 > c) ? 1 : -1;
      path.push_back(r * cols + c);
    }
  };
  auto walk_rows = [&] {
    while (r != r1) {
      r += (r1 > r) ? 1 : -1;
      path.push_back(r * cols + c);
    }
  };
  if (row_first) {
    walk_cols();
    walk_rows();
  } else {
    walk_rows();
    walk_cols();
  }
  return path;
}

EvacTask build_evac_task(const ScenarioConfig& cfg, const Terrain& t) {
  EvacTask task;
  task.demand = cfg.demand;
  task.segment_length = cfg.cell_size;
  const Index rows = t.rows, cols = t.cols;
  const Index r0 = rows / 2, c0 = cols / 2;
  task.origin = r0 * cols + c0;

  // One shelter per region on the highest non-channel ground. Regions are the
  // four quadrants around the origin, cycled when more shelters are requested.
  const std::array<std::pair<bool, bool>, 4> quadrants{{{false, false}, {false, true},
                                                        {true, false}, {true, true}}};
  std::vector<Index> taken{task.origin};
  for (Index s = 0; s < cfg.n_shelters; ++s) {
    const auto [lower, right] = quadrants[static_cast<std::size_t>(s % 4)];
    Index best = -1;
    for (Index r = lower ? r0 : 0; r < (lower ? rows : r0 + 1); ++r) {
      for (Index c = right ? c0 : 0; c < (right ? cols : c0 + 1); ++c) {
        const Index i = r * cols + c;
        if (t.channel_mask[static_cast<std::size_t>(i)]) continue;
        if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
        if (best < 0 || t.elevation[i] > t.elevation[best]) best = i;
      }
    }
    if (best < 0) {
      for (Index i = 0; i < t.n_cells(); ++i) {
        if (std::find(taken.begin(), taken.end(), i) == taken.end()) {
          best = i;
          break;
        }
      }
    }
    taken.push_back(best);
    task.shelter_cells.push_back(best);
    task.shelter_caps.push_back(cfg.shelter_capacity);
    for (Index k = 0; k < cfg.routes_per_shelter; ++k) {
      auto path = l_path(r0, c0, best / cols, best % cols, cols, k % 2 == 0);
      task.route_lengths.push_back(static_cast<double>(path.size()) * cfg.cell_size);
      task.routes.push_back(std::move(path));
      task.shelter_of_route.push_back(s);
    }
  }
  return task;
}

MatchTask build_match_task(const ScenarioConfig& cfg, const Terrain& t) {
  Rng rng = make_stream(cfg.terrain_seed, 3);
  const Index n = t.n_cells();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return t.elevation[a] < t.elevation[b]; });
  std::vector<Index> dry;
  for (Index i : order) {
    if (!t.channel_mask[static_cast<std::size_t>(i)]) dry.push_back(i);
  }
  if (dry.size() < static_cast<std::size_t>(cfg.n_aircraft + cfg.n_hangars)) dry = order;

  // Aircraft sit on the lower (flood-vulnerable) half of the dry cells,
  // hangars anywhere else.
  const std::size_t half = std::max<std::size_t>(dry.size() / 2, static_cast<std::size_t>(cfg.n_aircraft));
  std::vector<Index> low(dry.begin(), dry.begin() + static_cast<std::ptrdiff_t>(half));
  std::shuffle(low.begin(), low.end(), rng);
  MatchTask task;
  task.aircraft_cells.assign(low.begin(), low.begin() + cfg.n_aircraft);
  std::vector<Index> rest;
  for (Index i : dry) {
    if (std::find(task.aircraft_cells.begin(), task.aircraft_cells.end(), i) ==
        task.aircraft_cells.end()) {
      rest.push_back(i);
    }
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  task.hangar_cells.assign(rest.begin(), rest.begin() + cfg.n_hangars);
  task.hangar_caps.assign(static_cast<std::size_t>(cfg.n_hangars), 1.0);
  return task;
}

std::vector<Index> fixed_sites(const Terrain& t, Index k) {
  const auto& path = t.channel_path;
  std::vector<Index> sites;
  if (k <= 0) return sites;
  const Index len = static_cast<Index>(path.size());
  for (Index i = 0; i < k && i < len; ++i) {
    const Index pos = (k == 1) ? 0 : (i * (len - 1)) / (k - 1);
    sites.push_back(path[static_cast<std::size_t>(pos)]);
  }
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  // Short channels: top up with the next channel cells in path order.
  for (Index c : path) {
    if (static_cast<Index>(sites.size()) >= k) break;
    if (std::find(sites.begin(), sites.end(), c) == sites.end()) sites.push_back(c);
  }
  std::sort(sites.begin(), sites.end());
  return sites;
}

}  // namespace

CellGraph Scenario::graph() const {
  CellGraph g = build_grid_graph(config.rows, config.cols, config.cell_size);
  if (config.downslope_edges) add_downslope_edges(g, terrain.elevation);
  return g;
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.rows < 1 || cfg.cols < 1) throw ConfigError("scenario grid dimensions must be >= 1");
  const Index n = cfg.rows * cfg.cols;
  if (cfg.rows < 4 || cfg.cols < 4) throw ConfigError("scenario grid must be at least 4x4");
  if (cfg.window < 1) throw ConfigError("scenario window must be >= 1");
  if (cfg.spinup_steps < 0) throw ConfigError("spinup_steps must be >= 0");
  if (!(cfg.cell_size > 0) || !(cfg.dt > 0) || !(cfg.conductance > 0)) {
    throw ConfigError("cell_size, dt and conductance must be positive");
  }
  if (cfg.storm.amplitude < 0 || cfg.storm.peak_rain < 0 || cfg.storm.base_rain_max < 0 || cfg.storm.inflow_max < 0 ||
      cfg.storm.antecedent_max < 0) {
    throw ConfigError("storm magnitudes must be non-negative");
  }
  if (!(cfg.storm.radius_min > 0) || cfg.storm.radius_max < cfg.storm.radius_min) {
    throw ConfigError("storm radius range invalid");
  }
  if (cfg.n_shelters < 1 || cfg.routes_per_shelter < 1 || cfg.routes_per_shelter > 2) {
    throw ConfigError("need >= 1 shelter and 1 or 2 routes per shelter");
  }
  if (cfg.demand < 0 || cfg.shelter_capacity < 0) throw ConfigError("demand and capacity must be >= 0");
  if (cfg.n_aircraft < 1 || cfg.n_hangars < cfg.n_aircraft) {
    throw ConfigError("need 1 <= aircraft <= hangars");
  }
  if (cfg.n_aircraft + cfg.n_hangars + cfg.n_shelters + 1 > n || n < 10) {
    throw ConfigError("grid too small for the task layout");
  }
  if (cfg.n_fixed_sensors < 1 || cfg.n_fixed_sensors > n) throw ConfigError("n_fixed_sensors out of range");
}

Terrain generate_terrain(std::uint64_t seed, Index rows, Index cols) {
  if (rows < 1 || cols < 1 || rows * cols < 4) throw std::invalid_argument("terrain needs rows*cols >= 4");
  Rng rng = make_stream(seed, 1);
  Terrain t;
  t.rows = rows;
  t.cols = cols;
  const Index n = rows * cols;
  t.channel_mask.assign(static_cast<std::size_t>(n), 0);

  // Channel: 4-connected random walk across the columns.
  std::uniform_int_distribution<Index> start(rows / 4, std::max(rows / 4, (3 * rows) / 4 - (rows > 1 ? 1 : 0)));
  std::discrete_distribution<int> step({1.0, 2.0, 1.0});
  std::vector<Index> row_of_col(static_cast<std::size_t>(cols));
  Index r = start(rng);
  for (Index c = 0; c < cols; ++c) {
    Index next = r;
    if (c > 0) next = std::clamp<Index>(r + step(rng) - 1, 0, rows - 1);
    if (c > 0) {
      // vertical connector at column c
      for (Index rr = r; rr != next; rr += (next > r) ? 1 : -1) {
        const Index i = rr * cols + c;
        if (!t.channel_mask[static_cast<std::size_t>(i)]) {
          t.channel_mask[static_cast<std::size_t>(i)] = 1;
          t.channel_path.push_back(i);
        }
      }
    }
    r = next;
    row_of_col[static_cast<std::size_t>(c)] = r;
    const Index i = r * cols + c;
    if (!t.channel_mask[static_cast<std::size_t>(i)]) {
      t.channel_mask[static_cast<std::size_t>(i)] = 1;
      t.channel_path.push_back(i);
    }
  }

  const auto elev_waves = random_waves(rng, 4, 0.3);
  const auto rough_waves = random_waves(rng, 3, 1.0);
  t.elevation.resize(n);
  t.roughness.resize(n);
  for (Index rr = 0; rr < rows; ++rr) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = rr * cols + c;
      const double u = static_cast<double>(c) / static_cast<double>(cols);
      const double v = static_cast<double>(rr) / static_cast<double>(rows);
      const double tilt = cols > 1 ? kTilt * (1.0 - static_cast<double>(c) / static_cast<double>(cols - 1)) : 0.0;
      const double valley =
          kValleySlope * static_cast<double>(std::abs(rr - row_of_col[static_cast<std::size_t>(c)]));
      t.elevation[i] = 1.0 + tilt + valley + eval_waves(elev_waves, u, v);
      const double rough01 = 0.5 + 0.5 * std::tanh(eval_waves(rough_waves, u, v));
      t.roughness[i] = 0.05 + 0.05 * rough01;
    }
  }

  // Carve: every channel cell sits below all of its non-channel neighbours.
  for (Index i = 0; i < n; ++i) {
    if (!t.channel_mask[static_cast<std::size_t>(i)]) continue;
    t.roughness[i] = kChannelRoughness;
    t.elevation[i] -= kCarveDepth;
  }
  for (Index i = 0; i < n; ++i) {
    if (!t.channel_mask[static_cast<std::size_t>(i)]) continue;
    const Index rr = i / cols, c = i % cols;
    const std::array<std::pair<Index, Index>, 4> nb{{{rr - 1, c}, {rr + 1, c}, {rr, c - 1}, {rr, c + 1}}};
    for (const auto& [a, b] : nb) {
      if (a < 0 || b < 0 || a >= rows || b >= cols) continue;
      const Index j = a * cols + b;
      if (!t.channel_mask[static_cast<std::size_t>(j)]) t.elevation[i] = std::min(t.elevation[i], t.elevation[j]);
    }
  }
  return t;
}

Vector step_flood(const Vector& depth, const Terrain& terrain, const Vector& source, double dt,
                  double conductance) {
  const Index n = terrain.n_cells();
  require_dims(depth.size() == n && source.size() == n, "step_flood: field length");
  if ((depth.array() < 0.0).any()) throw std::invalid_argument("step_flood: negative depth");

  Vector h = depth;
  std::vector<std::pair<Index, Index>> edges;
  for_each_lattice_edge(terrain.rows, terrain.cols, [&](Index a, Index b) { edges.emplace_back(a, b); });
  const std::size_t m = edges.size();
  std::vector<double> flux(m);     // signed rate, positive from first to second
  Vector outflow(n), gsum(n);

  double remaining = dt;
  Index substeps = 0;
  while (remaining > 0.0) {
    outflow.setZero();
    gsum.setZero();
    for (std::size_t e = 0; e < m; ++e) {
      const auto [a, b] = edges[e];
      const double wa = terrain.elevation[a] + h[a];
      const double wb = terrain.elevation[b] + h[b];
      const Index up = (wa >= wb) ? a : b;
      const double g = conductance * std::pow(h[up], 5.0 / 3.0) / terrain.roughness[up];
      flux[e] = g * (wa - wb);
      gsum[a] += g;
      gsum[b] += g;
      outflow[up] += std::abs(flux[e]);
    }
    const double gmax = gsum.maxCoeff();
    double sub = remaining;
    if (gmax > 0.0) sub = std::min(remaining, 0.25 / gmax);
    if (++substeps >= kMaxSubsteps) sub = remaining;

    // Clip so no cell ships out more water than it holds.
    Vector scale = Vector::Ones(n);
    for (Index i = 0; i < n; ++i) {
      const double out = outflow[i] * sub;
      if (out > h[i] && out > 0.0) scale[i] = h[i] / out;
    }
    for (std::size_t e = 0; e < m; ++e) {
      const auto [a, b] = edges[e];
      const Index up = flux[e] >= 0.0 ? a : b;
      const double q = flux[e] * scale[up] * sub;
      h[a] -= q;
      h[b] += q;
    }
    h = h.cwiseMax(0.0);
    remaining -= sub;
  }
  h += source;
  return h;
}

Vector distance_to_channel(const Terrain& t) {
  const Index n = t.n_cells();
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  std::deque<Index> queue;
  for (Index i = 0; i < n; ++i) {
    if (t.channel_mask[static_cast<std::size_t>(i)]) {
      dist[i] = 0.0;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const Index i = queue.front();
    queue.pop_front();
    const Index r = i / t.cols, c = i % t.cols;
    const std::array<std::pair<Index, Index>, 4> nb{{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
    for (const auto& [a, b] : nb) {
      if (a < 0 || b < 0 || a >= t.rows || b >= t.cols) continue;
      const Index j = a * t.cols + b;
      if (dist[j] > dist[i] + 1.0) {
        dist[j] = dist[i] + 1.0;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

Scenario run_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  Scenario s;
  s.config = cfg;
  s.terrain = generate_terrain(cfg.terrain_seed, cfg.rows, cfg.cols);
  const Terrain& t = s.terrain;
  const Index n = t.n_cells();
  const Index T = cfg.window;
  const Index total = cfg.spinup_steps + T;

  Rng rng = make_stream(cfg.seed, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double amp = cfg.storm.amplitude;
  const double antecedent = amp * cfg.storm.antecedent_max * unit(rng);
  const double inflow_peak = amp * cfg.storm.inflow_max * unit(rng);
  const double inflow_time = static_cast<double>(total) * unit(rng);
  const double storm_amp = amp * cfg.storm.peak_rain * (0.5 + 0.5 * unit(rng));
  const double storm_r = cfg.storm.radius_min + (cfg.storm.radius_max - cfg.storm.radius_min) * unit(rng);
  const double storm_row = static_cast<double>(cfg.rows) * unit(rng);
  const double storm_col = static_cast<double>(cfg.cols) * unit(rng);
  const double storm_time = static_cast<double>(total) * unit(rng);
  const double storm_dur = 3.0 + 5.0 * unit(rng);
  const double base_rain = amp * cfg.storm.base_rain_max * unit(rng);

  Vector h = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (t.channel_mask[static_cast<std::size_t>(i)]) h[i] = antecedent;
  }
  const double initial_volume = h.sum();
  double source_volume = 0.0;

  const Vector dist = distance_to_channel(t);
  const Index inlet = t.channel_path.front();
  s.depths.resize(T, n);
  s.features.reserve(static_cast<std::size_t>(T));
  s.insitu.reserve(static_cast<std::size_t>(T));

  for (Index step = 0; step < total; ++step) {
    const double ts = static_cast<double>(step);
    const double pulse = std::max(0.0, 1.0 - std::abs(ts - storm_time) / storm_dur);
    Vector rain(n);
    for (Index i = 0; i < n; ++i) {
      const double dr = static_cast<double>(i / cfg.cols) + 0.5 - storm_row;
      const double dc = static_cast<double>(i % cfg.cols) + 0.5 - storm_col;
      rain[i] = base_rain + storm_amp * pulse * std::exp(-(dr * dr + dc * dc) / (2.0 * storm_r * storm_r));
    }
    Vector src = rain;
    src[inlet] += inflow_peak * std::max(0.0, 1.0 - std::abs(ts - inflow_time) / 6.0);
    source_volume += src.sum();

    const Vector prev = h;
    h = step_flood(h, t, src, cfg.dt, cfg.conductance);
    check_finite(h, "flood depth");

    if (step >= cfg.spinup_steps) {
      const Index k = step - cfg.spinup_steps;
      s.depths.row(k) = h.transpose();
      Matrix f(n, kFeatureDim);
      f.col(0) = rain * 100.0;
      f.col(1) = t.elevation;
      f.col(2) = dist / 10.0;
      f.col(3) = t.roughness * 10.0;
      s.features.push_back(std::move(f));
      Matrix obs(n, kInsituDim);
      obs.col(0) = h;
      obs.col(1) = h - prev;
      s.insitu.push_back(std::move(obs));
    }
  }
  const double expected = initial_volume + source_volume;
  s.mass_balance_rel_err = expected > 0.0 ? std::abs(h.sum() - expected) / expected : std::abs(h.sum());

  // Recorded arrays are held at float precision so persisted scenarios
  // round-trip exactly.
  auto to_float = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  to_float(s.depths);
  for (auto& f : s.features) to_float(f);
  for (auto& o : s.insitu) to_float(o);

  s.evac = build_evac_task(cfg, t);
  s.match = build_match_task(cfg, t);
  s.fixed_sensor_cells = fixed_sites(t, cfg.n_fixed_sensors);
  return s;
}

std::vector<Scenario> generate_suite(const ScenarioConfig& cfg, Index count) {
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(std::max<Index>(count, 0)));
  for (Index i = 0; i < count; ++i) {
    ScenarioConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    out.push_back(run_scenario(c));
  }
  return out;
}

Observation observe(const Scenario& s, const Vector& z, Index t) {
  const Index n = s.n_cells();
  require_dims(z.size() == n, "observe: placement length");
  require_dims(t >= 0 && t < s.window(), "observe: time index");
  Observation o(n, kFeatureDim + kInsituDim);
  o.leftCols(kFeatureDim) = s.features[static_cast<std::size_t>(t)];
  o.rightCols(kInsituDim) = s.insitu[static_cast<std::size_t>(t)].array().colwise() * z.array();
  return o;
}

}  // namespace dfsense
