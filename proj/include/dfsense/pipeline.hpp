#pragma once
// Training and evaluation: reconstruction pre-training, end-to-end training
// with I-MLE placement gradients, the ablation variants, baseline
// combinations and the metrics table.

#include "dfsense/baselines.hpp"
#include "dfsense/decision.hpp"
#include "dfsense/floodsim.hpp"
#include "dfsense/selector.hpp"
#include "dfsense/stmodel.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dfsense {

enum class Task { evac, match };
enum class Variant { full, no_st, no_imle, no_dfl };
enum class PretrainPlacement { fixed, random };

std::string to_string(Task t);
std::string to_string(Variant v);
std::string to_string(PretrainPlacement p);
Task parse_task(const std::string& s);
Variant parse_variant(const std::string& s);
PretrainPlacement parse_pretrain_placement(const std::string& s);

struct TrainConfig {
  Index batch_size = 64;
  Index window = 10;
  double lr = 5e-4;
  Index pretrain_epochs = 50;
  Index e2e_epochs = 500;
  Index K = 4;
  std::uint64_t seed = 0;
  Task task = Task::evac;
  Variant variant = Variant::full;
  ImleConfig imle;
  PretrainPlacement pretrain_placement = PretrainPlacement::fixed;
  bool sample_k = true;       // k drawn from [1, K] per training batch
  bool forecast = false;      // predict frame T from frames 1..T-1
  Index n_scenarios = 200;
  double train_frac = 0.6;
  double val_frac = 0.2;
  Index knn_k = 3;
  bool keep_best = true;      // return the parameters with the lowest validation loss
};

void validate(const TrainConfig& cfg);

struct ModelParams {
  ScoringParams scorer;
  StModelParams st;
  LinearReconParams linear;  // only for the no_st variant
  EvacHeadParams evac;
  MatchHeadParams match;

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

/// Shared, scenario-independent structures for one terrain and task layout.
struct TaskContext {
  CellGraph graph;
  SparseMatrix norm_adj;
  SparseMatrix impact_op;
  Matrix dist_norm;
  EvacTask evac;
  MatchTask match;
  std::vector<Index> fixed_sensor_cells;
  Index n_cells = 0;
};

TaskContext make_context(const Scenario& s, const DecisionConfig& dc);

ModelParams init_params(const TaskContext& ctx, const TrainConfig& cfg, const DecisionConfig& dc);

struct Split {
  std::vector<Index> train, val, test;
};

/// Index-order split; with fewer than three scenarios every part is the full set.
Split split_scenarios(Index n, double train_frac, double val_frac);

struct EpochLog {
  std::string phase;  // "pretrain" or "e2e"
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Model output for one scenario and placement, with everything needed for
/// the backward pass.
struct Forward {
  std::vector<Matrix> inputs;
  RolloutCache rollout;
  Vector yhat;
  EvacHeadCache evac_cache;
  Allocation alloc;
  Vector impact_hat;
  MatchHeadCache match_cache;
  SinkhornCache sinkhorn_cache;
  Matrix P;
};

/// Reference target of a scenario (last frame).
Vector scenario_target(const Scenario& s);
/// Input frames consumed by the model (all T for nowcasting, T-1 for forecasting).
Index input_steps(const Scenario& s, const TrainConfig& cfg);

Forward forward(const ModelParams& p, const TaskContext& ctx, const Scenario& s, const Vector& z,
                const TrainConfig& cfg, const DecisionConfig& dc);
Vector predict(const ModelParams& p, const TaskContext& ctx, const Scenario& s, const Vector& z,
               const TrainConfig& cfg);

/// Task loss of the decision in `f` under ground-truth costs of `s`.
double task_loss(const Forward& f, const TaskContext& ctx, const Scenario& s, const TrainConfig& cfg,
                 const DecisionConfig& dc);

/// Scores and deterministic top-K placement.
Vector placement_scores(const ModelParams& p, const Scenario& s);
PlacementVector learned_placement(const ModelParams& p, const Scenario& s, Index k);

struct SampleGrad {
  double loss = 0.0;  // training objective of the variant
  double task = 0.0;  // task loss
  double mse = 0.0;
  Vector dz;          // dL/dz
};

/// Forward and backward for one scenario and placement. Gradients of the
/// reconstruction model and the decision head are accumulated into `g`.
SampleGrad sample_gradient(const ModelParams& p, ModelParams& g, const TaskContext& ctx,
                           const Scenario& s, const Vector& z, const TrainConfig& cfg,
                           const DecisionConfig& dc);

using Progress = std::function<void(const EpochLog&)>;

std::vector<EpochLog> pretrain(ModelParams& p, const TaskContext& ctx,
                               const std::vector<Scenario>& scenarios, const Split& split,
                               const TrainConfig& cfg, const Progress& progress = {});

std::vector<EpochLog> train_e2e(ModelParams& p, const TaskContext& ctx,
                                const std::vector<Scenario>& scenarios, const Split& split,
                                const TrainConfig& cfg, const DecisionConfig& dc,
                                const Progress& progress = {});

// ----------------------------------------------------------------- metrics

struct MetricsRow {
  std::string method;
  std::string task;
  double decision_cost = 0.0;
  double overflow = 0.0;
  double pred_mse = 0.0;
  double infer_time_s = 0.0;
  std::uint64_t seed = 0;
};

using MetricsTable = std::vector<MetricsRow>;

void write_metrics_csv(std::ostream& os, const MetricsTable& table);
std::string format_sig6(double v);

enum class PlacementKind { fixed, pca };
enum class ImputerKind { idw, knn, oracle };
enum class DeciderKind { ilp, iw };

struct MethodSpec {
  PlacementKind placement = PlacementKind::fixed;
  ImputerKind imputer = ImputerKind::idw;
  DeciderKind decider = DeciderKind::ilp;

  std::string name() const;
};

/// Parses `placement+imputer+decider`; throws ConfigError naming valid tokens.
MethodSpec parse_method(const std::string& s);
/// The eight placement x imputer x decider combinations of the baseline table.
std::vector<MethodSpec> all_baselines();

MetricsRow evaluate_baseline(const MethodSpec& m, const TaskContext& ctx,
                             const std::vector<Scenario>& scenarios, const Split& split,
                             const TrainConfig& cfg, const DecisionConfig& dc);

MetricsRow evaluate_learned(const ModelParams& p, const std::string& name, const TaskContext& ctx,
                            const std::vector<Scenario>& scenarios,
                            const std::vector<Index>& eval_set, const TrainConfig& cfg,
                            const DecisionConfig& dc);

struct AblationResult {
  MetricsTable table;
  std::vector<std::vector<EpochLog>> logs;  // one per variant
};

/// full, no_st, no_imle and no_dfl on the same scenarios and seed.
AblationResult run_ablation(const ScenarioConfig& sc, const TrainConfig& cfg,
                            const DecisionConfig& dc, const Progress& progress = {});

/// Number of worker threads: hardware concurrency capped by DFSENSE_THREADS.
unsigned worker_threads();

/// Runs f(i) for i in [begin, end) on up to worker_threads() threads.
void parallel_for(Index begin, Index end, const std::function<void(Index)>& f);

}  // namespace dfsense
