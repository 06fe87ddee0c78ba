#include "dfsense/floodsim.hpp"
#include "helpers.hpp"

#include "doctest.h"

using namespace dfsense;

namespace {

Terrain flat_terrain(Index rows, Index cols) {
  Terrain t;
  t.rows = rows;
  t.cols = cols;
  t.elevation = Vector::Zero(rows * cols);
  t.roughness = Vector::Constant(rows * cols, 0.05);
  t.channel_mask.assign(static_cast<std::size_t>(rows * cols), 0);
  return t;
}

}  // namespace

TEST_CASE("terrain is deterministic and carved") {
  const Terrain a = generate_terrain(7, 12, 10);
  const Terrain b = generate_terrain(7, 12, 10);
  CHECK(a.elevation == b.elevation);
  CHECK(a.channel_path == b.channel_path);
  CHECK(generate_terrain(8, 12, 10).elevation != a.elevation);
  CHECK((a.roughness.array() > 0.0).all());
  CHECK(!a.channel_path.empty());

  for (Index i = 0; i < a.n_cells(); ++i) {
    if (!a.channel_mask[static_cast<std::size_t>(i)]) continue;
    const Index r = i / a.cols, c = i % a.cols;
    for (auto [dr, dc] : {std::pair<Index, Index>{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
      const Index rr = r + dr, cc = c + dc;
      if (rr < 0 || cc < 0 || rr >= a.rows || cc >= a.cols) continue;
      const Index j = rr * a.cols + cc;
      if (!a.channel_mask[static_cast<std::size_t>(j)]) CHECK(a.elevation[i] <= a.elevation[j]);
    }
  }
  // channel path is 4-connected
  for (std::size_t k = 1; k < a.channel_path.size(); ++k) {
    const Index p = a.channel_path[k - 1], q = a.channel_path[k];
    CHECK(std::abs(p / a.cols - q / a.cols) + std::abs(p % a.cols - q % a.cols) == 1);
  }

  const Terrain tiny = generate_terrain(1, 2, 2);
  CHECK(tiny.n_cells() == 4);
  CHECK_THROWS_AS(generate_terrain(1, 1, 3), std::invalid_argument);
}

TEST_CASE("routing on flat dry ground does nothing") {
  const Terrain t = flat_terrain(3, 3);
  const Vector h = step_flood(Vector::Zero(9), t, Vector::Zero(9), 1.0);
  CHECK(h.isZero());
  Vector src = Vector::Zero(9);
  src[4] = 0.3;
  CHECK(step_flood(Vector::Zero(9), t, src, 1.0)[4] == doctest::Approx(0.3));
  Vector neg = Vector::Zero(9);
  neg[0] = -1.0;
  CHECK_THROWS_AS(step_flood(neg, t, Vector::Zero(9), 1.0), std::invalid_argument);
}

TEST_CASE("two cells level out") {
  const Terrain t = flat_terrain(1, 2);
  Vector h(2);
  h << 1.0, 0.0;
  for (int i = 0; i < 2000; ++i) h = step_flood(h, t, Vector::Zero(2), 1.0, 0.5);
  CHECK(h[0] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(h[1] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(h.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("routing conserves volume") {
  const Terrain t = generate_terrain(3, 10, 10);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Vector h = testing::random_vector(100, rng, 0.0, 2.0);
    const Vector src = testing::random_vector(100, rng, 0.0, 0.1);
    const Vector next = step_flood(h, t, src, 1.0);
    CHECK((next.array() >= 0.0).all());
    CHECK(std::abs(next.sum() - h.sum() - src.sum()) < 1e-9 * (1.0 + h.sum()));
  }
}

TEST_CASE("distance to channel") {
  const Terrain t = generate_terrain(7, 10, 10);
  const Vector d = distance_to_channel(t);
  for (Index i = 0; i < t.n_cells(); ++i) {
    const bool ch = t.channel_mask[static_cast<std::size_t>(i)];
    CHECK((d[i] == 0.0) == ch);
    if (ch) {
      const Index r = i / t.cols, c = i % t.cols;
      if (r > 0 && !t.channel_mask[static_cast<std::size_t>(i - t.cols)]) CHECK(d[i - t.cols] == 1.0);
      if (c > 0 && !t.channel_mask[static_cast<std::size_t>(i - 1)]) CHECK(d[i - 1] == 1.0);
    }
  }
}

TEST_CASE("scenario shapes, determinism and conservation") {
  const ScenarioConfig cfg = testing::small_config();
  const Scenario a = run_scenario(cfg);
  const Scenario b = run_scenario(cfg);
  CHECK(a.depths == b.depths);
  CHECK(a.window() == cfg.window);
  CHECK(a.n_cells() == 64);
  CHECK(static_cast<Index>(a.features.size()) == cfg.window);
  CHECK(static_cast<Index>(a.insitu.size()) == cfg.window);
  CHECK(a.features[0].cols() == kFeatureDim);
  CHECK(a.insitu[0].cols() == kInsituDim);
  CHECK((a.depths.array() >= 0.0).all());
  CHECK(a.mass_balance_rel_err < 1e-6);
  CHECK(a.target() == a.depths.row(cfg.window - 1).transpose());
  CHECK(a.evac.n_routes() == cfg.n_shelters * cfg.routes_per_shelter);
  CHECK(a.match.n_aircraft() == cfg.n_aircraft);
  CHECK(static_cast<Index>(a.fixed_sensor_cells.size()) == cfg.n_fixed_sensors);
  for (Index c : a.fixed_sensor_cells) CHECK(a.terrain.channel_mask[static_cast<std::size_t>(c)]);
  // insitu channel 0 is the depth
  for (Index t = 0; t < cfg.window; ++t) CHECK(a.insitu[static_cast<std::size_t>(t)].col(0) == a.depths.row(t).transpose());

  ScenarioConfig ten = cfg;
  ten.window = 10;
  CHECK(run_scenario(ten).depths.rows() == 10);

  ScenarioConfig dry = cfg;
  dry.storm.amplitude = 0.0;
  dry.storm.antecedent_max = 0.0;
  dry.storm.base_rain_max = 0.0;
  CHECK(run_scenario(dry).depths.isZero());

  ScenarioConfig bad = cfg;
  bad.rows = 2;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("suite storms differ, layout is shared") {
  const auto suite = generate_suite(testing::small_config(), 3);
  REQUIRE(suite.size() == 3);
  CHECK(suite[0].depths != suite[1].depths);
  CHECK(suite[0].evac.routes == suite[2].evac.routes);
  CHECK(suite[0].terrain.elevation == suite[1].terrain.elevation);
  for (const auto& s : suite) CHECK(s.mass_balance_rel_err < 1e-6);
}

TEST_CASE("observe masks in-situ channels") {
  const Scenario s = run_scenario(testing::small_config());
  Vector z = Vector::Zero(s.n_cells());
  z[3] = 1.0;
  const Observation o = observe(s, z, 2);
  CHECK(o.cols() == kFeatureDim + kInsituDim);
  CHECK(o.leftCols(kFeatureDim) == s.features[2]);
  for (Index i = 0; i < s.n_cells(); ++i) {
    if (i == 3) {
      CHECK(o.row(i).tail(kInsituDim) == s.insitu[2].row(i));
    } else {
      CHECK(o.row(i).tail(kInsituDim).isZero());
    }
  }
}
