#include "dfsense/pipeline.hpp"
#include "helpers.hpp"

#include "doctest.h"

#include <set>
#include <sstream>

using namespace dfsense;
using testing::central_diff;
using testing::rel_err;

namespace {

TrainConfig small_train() {
  TrainConfig t;
  t.window = 4;
  t.batch_size = 4;
  t.pretrain_epochs = 3;
  t.e2e_epochs = 3;
  t.n_scenarios = 10;
  t.lr = 1e-3;
  return t;
}

struct Fixture {
  ScenarioConfig sc = testing::small_config();
  TrainConfig cfg = small_train();
  DecisionConfig dc;
  std::vector<Scenario> suite = generate_suite(sc, cfg.n_scenarios);
  TaskContext ctx = make_context(suite.front(), dc);
  Split split = split_scenarios(cfg.n_scenarios, cfg.train_frac, cfg.val_frac);
};

bool same_params(const ModelParams& a, const ModelParams& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (*ta[i].value != *tb[i].value) return false;
  return true;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& t : z.tensors()) t.value->setZero();
  return z;
}

}  // namespace

TEST_CASE("enum parsing") {
  CHECK(parse_task("match") == Task::match);
  CHECK(parse_variant("no_imle") == Variant::no_imle);
  CHECK(to_string(Variant::no_dfl) == "no_dfl");
  CHECK(parse_pretrain_placement("random") == PretrainPlacement::random);
  CHECK_THROWS_AS(parse_task("route"), ConfigError);
  CHECK_THROWS_AS(parse_variant("none"), ConfigError);
}

TEST_CASE("scenario split") {
  const Split s = split_scenarios(10, 0.6, 0.2);
  CHECK(s.train == std::vector<Index>{0, 1, 2, 3, 4, 5});
  CHECK(s.val == std::vector<Index>{6, 7});
  CHECK(s.test == std::vector<Index>{8, 9});
  const Split tiny = split_scenarios(2, 0.6, 0.2);
  CHECK(tiny.train == std::vector<Index>{0, 1});
  CHECK(tiny.test == std::vector<Index>{0, 1});
}

TEST_CASE("method names") {
  const MethodSpec m = parse_method("pca+knn+iw");
  CHECK(m.placement == PlacementKind::pca);
  CHECK(m.imputer == ImputerKind::knn);
  CHECK(m.decider == DeciderKind::iw);
  CHECK(m.name() == "pca+knn+iw");
  CHECK_THROWS_AS(parse_method("pca+spline+iw"), ConfigError);
  CHECK_THROWS_AS(parse_method("pca+knn"), ConfigError);
  const auto all = all_baselines();
  CHECK(all.size() == 8);
  std::set<std::string> names;
  for (const auto& b : all) names.insert(b.name());
  CHECK(names.size() == 8);
}

TEST_CASE("metrics csv") {
  CHECK(format_sig6(1234567.0) == "1.23457e+06");
  CHECK(format_sig6(0.5) == "0.5");
  std::ostringstream os;
  write_metrics_csv(os, {MetricsRow{"fixed+idw+ilp", "evac", 12.5, 0.0, 0.25, 0.001, 3}});
  CHECK(os.str() == "method,task,decision_cost,overflow,pred_mse,infer_time_s,seed\n"
                    "fixed+idw+ilp,evac,12.5,0,0.25,0.001,3\n");
}

TEST_CASE("placement gradient of the task loss") {
  Fixture f;
  const ModelParams p = init_params(f.ctx, f.cfg, f.dc);
  std::mt19937_64 g(4);
  for (Task task : {Task::evac, Task::match}) {
    TrainConfig cfg = f.cfg;
    cfg.task = task;
    const Scenario& s = f.suite[0];
    const Vector z = testing::random_vector(s.n_cells(), g, 0.0, 1.0);
    ModelParams grads = zeros_like(p);
    const SampleGrad sg = sample_gradient(p, grads, f.ctx, s, z, cfg, f.dc);
    auto loss = [&](const Matrix& m) {
      return task_loss(forward(p, f.ctx, s, Vector(m.col(0)), cfg, f.dc), f.ctx, s, cfg, f.dc);
    };
    CHECK(sg.loss == doctest::Approx(loss(Matrix(z))));
    CHECK(rel_err(Matrix(sg.dz), central_diff(loss, Matrix(z)), 1e-5) < 1e-4);
  }
}

TEST_CASE("MAP-difference gradients are ternary and balanced") {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector th = testing::random_vector(30, g, -1, 1);
    const Vector dz = testing::random_vector(30, g, -1, 1);
    const Index k = 1 + static_cast<Index>(g() % 4);
    const Vector d = imle_gradient(map_top_k(th, k), map_top_k(imle_target(th, dz, 10.0), k));
    CHECK(d.sum() == 0.0);
    for (Index i = 0; i < d.size(); ++i) CHECK((d[i] == 0.0 || d[i] == 1.0 || d[i] == -1.0));
  }
}

TEST_CASE("pretraining") {
  Fixture f;
  ModelParams p = init_params(f.ctx, f.cfg, f.dc);
  const ModelParams start = p;
  TrainConfig none = f.cfg;
  none.pretrain_epochs = 0;
  CHECK(pretrain(p, f.ctx, f.suite, f.split, none).empty());
  CHECK(same_params(p, start));

  TrainConfig cfg = f.cfg;
  cfg.pretrain_epochs = 8;
  const auto logs = pretrain(p, f.ctx, f.suite, f.split, cfg);
  REQUIRE(logs.size() == 8);
  CHECK(logs.back().train_loss <= logs.front().train_loss);
  CHECK(logs.front().phase == "pretrain");
  // only the reconstruction model moves
  CHECK(p.scorer.W1 == start.scorer.W1);
  CHECK(p.evac.W1 == start.evac.W1);
  CHECK(p.st.W_S != start.st.W_S);
}

TEST_CASE("end-to-end training is deterministic") {
  Fixture f;
  for (Variant v : {Variant::full, Variant::no_st, Variant::no_imle, Variant::no_dfl}) {
    TrainConfig cfg = f.cfg;
    cfg.variant = v;
    ModelParams a = init_params(f.ctx, cfg, f.dc), b = a;
    std::vector<EpochLog> la, lb;
    la = train_e2e(a, f.ctx, f.suite, f.split, cfg, f.dc);
    lb = train_e2e(b, f.ctx, f.suite, f.split, cfg, f.dc);
    INFO("variant " << to_string(v));
    CHECK(same_params(a, b));
    REQUIRE(la.size() == 3);
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].train_loss == lb[i].train_loss);
    CHECK(std::isfinite(la.back().val_loss));
  }
  // thread count does not change the result
  TrainConfig cfg = f.cfg;
  ModelParams one = init_params(f.ctx, cfg, f.dc), many = one;
  setenv("DFSENSE_THREADS", "1", 1);
  train_e2e(one, f.ctx, f.suite, f.split, cfg, f.dc);
  setenv("DFSENSE_THREADS", "4", 1);
  train_e2e(many, f.ctx, f.suite, f.split, cfg, f.dc);
  unsetenv("DFSENSE_THREADS");
  CHECK(same_params(one, many));
}

TEST_CASE("baseline harness") {
  Fixture f;
  for (Task task : {Task::evac, Task::match}) {
    TrainConfig cfg = f.cfg;
    cfg.task = task;
    INFO("task " << to_string(task));
    double best_other = 1e300;
    for (const auto& m : all_baselines()) {
      const MetricsRow r = evaluate_baseline(m, f.ctx, f.suite, f.split, cfg, f.dc);
      CHECK(r.method == m.name());
      CHECK(r.task == to_string(task));
      CHECK(std::isfinite(r.decision_cost));
      if (m.decider == DeciderKind::ilp) CHECK(r.overflow == 0.0);
      best_other = std::min(best_other, r.decision_cost);
    }
    const MetricsRow oracle = evaluate_baseline(parse_method("fixed+oracle+ilp"), f.ctx, f.suite, f.split, cfg, f.dc);
    CHECK(oracle.pred_mse == 0.0);
    CHECK(oracle.decision_cost <= best_other + 1e-9);
    const ModelParams p = init_params(f.ctx, cfg, f.dc);
    const MetricsRow learned = evaluate_learned(p, "learned", f.ctx, f.suite, f.split.test, cfg, f.dc);
    CHECK(oracle.decision_cost <= learned.decision_cost + 1e-9);
  }
}

TEST_CASE("ablation yields one row per variant") {
  TrainConfig cfg = small_train();
  cfg.n_scenarios = 6;
  cfg.pretrain_epochs = 1;
  cfg.e2e_epochs = 1;
  const AblationResult r = run_ablation(testing::small_config(), cfg, DecisionConfig{});
  REQUIRE(r.table.size() == 4);
  CHECK(r.table[0].method == "full");
  CHECK(r.table[1].method == "no_st");
  CHECK(r.table[2].method == "no_imle");
  CHECK(r.table[3].method == "no_dfl");
  CHECK(r.logs.size() == 4);
}
