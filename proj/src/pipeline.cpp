#include "dfsense/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace dfsense {

namespace {

// RNG stream ids
constexpr std::uint64_t kStreamScorer = 10;
constexpr std::uint64_t kStreamSt = 11;
constexpr std::uint64_t kStreamLinear = 12;
constexpr std::uint64_t kStreamEvac = 13;
constexpr std::uint64_t kStreamMatch = 14;
constexpr std::uint64_t kStreamShuffle = 1000;
constexpr std::uint64_t kStreamBatchK = 2000;
constexpr std::uint64_t kStreamNoise = 3000;
constexpr std::uint64_t kStreamPretrainZ = 4000;

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(splitmix64(a) ^ splitmix64(b + 0x9E37) ^ splitmix64(c + 0x7F4A));
}

}  // namespace

std::string to_string(Task t) { return t == Task::evac ? "evac" : "match"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_st: return "no_st";
    case Variant::no_imle: return "no_imle";
    case Variant::no_dfl: return "no_dfl";
  }
  return "full";
}

std::string to_string(PretrainPlacement p) { return p == PretrainPlacement::fixed ? "fixed" : "random"; }

Task parse_task(const std::string& s) {
  if (s == "evac") return Task::evac;
  if (s == "match") return Task::match;
  throw ConfigError("unknown task '" + s + "' (valid: evac, match)");
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::no_st, Variant::no_imle, Variant::no_dfl}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (valid: full, no_st, no_imle, no_dfl)");
}

PretrainPlacement parse_pretrain_placement(const std::string& s) {
  if (s == "fixed") return PretrainPlacement::fixed;
  if (s == "random") return PretrainPlacement::random;
  throw ConfigError("unknown pretrain placement '" + s + "' (valid: fixed, random)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.window < 1) throw ConfigError("window must be >= 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be positive");
  if (cfg.pretrain_epochs < 0 || cfg.e2e_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (cfg.K < 1) throw ConfigError("K must be >= 1");
  if (cfg.n_scenarios < 1) throw ConfigError("n_scenarios must be >= 1");
  if (!(cfg.train_frac > 0.0) || cfg.val_frac < 0.0 || cfg.train_frac + cfg.val_frac >= 1.0) {
    throw ConfigError("split fractions must satisfy train > 0, val >= 0, train + val < 1");
  }
  if (cfg.knn_k < 1) throw ConfigError("knn_k must be >= 1");
  if (!(cfg.imle.lambda > 0.0)) throw ConfigError("imle.lambda must be positive");
  if (cfg.imle.sog_k < 1 || cfg.imle.s_terms < 1) throw ConfigError("imle sog_k and s_terms must be >= 1");
  if (!(cfg.imle.temperature > 0.0)) throw ConfigError("imle.temperature must be positive");
  if (cfg.forecast && cfg.window < 2) throw ConfigError("forecasting needs window >= 2");
}

std::vector<NamedTensor> ModelParams::tensors() {
  std::vector<NamedTensor> out;
  auto add = [&](const std::string& prefix, std::vector<NamedTensor> ts) {
    for (auto& t : ts) out.push_back({prefix + t.name, t.value});
  };
  add("scorer.", scorer.tensors());
  add("st.", st.tensors());
  add("linear.", linear.tensors());
  add("evac.", evac.tensors());
  add("match.", match.tensors());
  return out;
}

std::vector<ConstNamedTensor> ModelParams::tensors() const {
  std::vector<ConstNamedTensor> out;
  auto add = [&](const std::string& prefix, std::vector<ConstNamedTensor> ts) {
    for (auto& t : ts) out.push_back({prefix + t.name, t.value});
  };
  add("scorer.", scorer.tensors());
  add("st.", st.tensors());
  add("linear.", linear.tensors());
  add("evac.", evac.tensors());
  add("match.", match.tensors());
  return out;
}

TaskContext make_context(const Scenario& s, const DecisionConfig& dc) {
  TaskContext ctx;
  ctx.graph = s.graph();
  ctx.norm_adj = ctx.graph.norm_adj;
  ctx.evac = s.evac;
  ctx.match = s.match;
  ctx.impact_op = build_impact_operator(ctx.graph, s.match, dc.impact_neighbors);
  ctx.dist_norm = normalized_distances(ctx.graph, s.match);
  ctx.fixed_sensor_cells = s.fixed_sensor_cells;
  ctx.n_cells = s.n_cells();
  return ctx;
}

ModelParams init_params(const TaskContext& ctx, const TrainConfig& cfg, const DecisionConfig& dc) {
  ModelParams p;
  Rng r_scorer = make_stream(cfg.seed, kStreamScorer);
  p.scorer = ScoringParams::init(kFeatureDim, kScoringHidden, r_scorer);
  Rng r_st = make_stream(cfg.seed, kStreamSt);
  p.st = StModelParams::init(kInputDim, kStHidden, r_st);
  if (cfg.variant == Variant::no_st) {
    Rng r_lin = make_stream(cfg.seed, kStreamLinear);
    p.linear = LinearReconParams::init(ctx.n_cells, kInputDim, r_lin);
  }
  Rng r_evac = make_stream(cfg.seed, kStreamEvac);
  p.evac = EvacHeadParams::init(evac_input_dim(ctx.evac, dc.evac_pooling), dc.evac_mlp_hidden,
                                ctx.evac.n_routes(), r_evac);
  Rng r_match = make_stream(cfg.seed, kStreamMatch);
  p.match = MatchHeadParams::init(dc.match_mlp_hidden, r_match);
  return p;
}

Split split_scenarios(Index n, double train_frac, double val_frac) {
  Split sp;
  if (n < 3) {
    for (Index i = 0; i < n; ++i) {
      sp.train.push_back(i);
      sp.val.push_back(i);
      sp.test.push_back(i);
    }
    return sp;
  }
  Index n_train = std::max<Index>(1, static_cast<Index>(std::llround(train_frac * static_cast<double>(n))));
  Index n_val = std::max<Index>(1, static_cast<Index>(std::llround(val_frac * static_cast<double>(n))));
  if (n_train + n_val > n - 1) n_train = n - 1 - n_val;
  for (Index i = 0; i < n; ++i) {
    if (i < n_train) sp.train.push_back(i);
    else if (i < n_train + n_val) sp.val.push_back(i);
    else sp.test.push_back(i);
  }
  return sp;
}

// --------------------------------------------------------------- threading

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DFSENSE_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
  }
  return n;
}

void parallel_for(Index begin, Index end, const std::function<void(Index)>& f) {
  const Index count = end - begin;
  if (count <= 0) return;
  const auto n_threads = static_cast<Index>(std::min<unsigned>(worker_threads(), static_cast<unsigned>(count)));
  if (n_threads <= 1) {
    for (Index i = begin; i < end; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads));
  std::vector<std::thread> pool;
  for (Index t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (Index i = begin + t; i < end; i += n_threads) f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ------------------------------------------------------------ forward pass

Vector scenario_target(const Scenario& s) { return s.target(); }

Index input_steps(const Scenario& s, const TrainConfig& cfg) {
  require_dims(cfg.window == s.window(), "train window vs scenario window");
  return cfg.forecast ? s.window() - 1 : s.window();
}

namespace {

Vector true_route_costs(const Scenario& s, const TaskContext& ctx, const DecisionConfig& dc) {
  return route_costs(scenario_target(s), ctx.evac, dc.depth_cost_coeff);
}

Matrix true_match_costs(const Scenario& s, const TaskContext& ctx, const DecisionConfig& dc) {
  return match_costs(scenario_target(s), ctx.dist_norm, ctx.impact_op, dc.impact_weight);
}

Vector reconstruct(const ModelParams& p, const TaskContext& ctx, const std::vector<Matrix>& inputs,
                   RolloutCache* cache) {
  if (!p.linear.empty()) return linear_recon(inputs.back(), p.linear);
  return rollout(ctx.norm_adj, inputs, p.st, cache);
}

}  // namespace

Forward forward(const ModelParams& p, const TaskContext& ctx, const Scenario& s, const Vector& z,
                const TrainConfig& cfg, const DecisionConfig& dc) {
  Forward f;
  f.inputs = assemble_window(s, z, input_steps(s, cfg));
  f.yhat = reconstruct(p, ctx, f.inputs, &f.rollout);
  if (cfg.task == Task::evac) {
    f.alloc = evac_head(f.yhat, p.evac, ctx.evac, dc.evac_pooling, &f.evac_cache);
  } else {
    f.impact_hat = hangar_impact(f.yhat, ctx.impact_op);
    const Matrix S = match_head(f.impact_hat, ctx.dist_norm, p.match, &f.match_cache);
    f.P = sinkhorn(S, dc.sinkhorn_iters, &f.sinkhorn_cache);
  }
  return f;
}

Vector predict(const ModelParams& p, const TaskContext& ctx, const Scenario& s, const Vector& z,
               const TrainConfig& cfg) {
  return reconstruct(p, ctx, assemble_window(s, z, input_steps(s, cfg)), nullptr);
}

double task_loss(const Forward& f, const TaskContext& ctx, const Scenario& s, const TrainConfig& cfg,
                 const DecisionConfig& dc) {
  if (cfg.task == Task::evac) {
    return evac_loss(f.alloc, true_route_costs(s, ctx, dc), ctx.evac, dc.gamma_assign);
  }
  return match_loss(f.P, true_match_costs(s, ctx, dc), ctx.match.hangar_caps, dc.gamma_match);
}

Vector placement_scores(const ModelParams& p, const Scenario& s) {
  return score_locations(temporal_mean(s.features), p.scorer);
}

PlacementVector learned_placement(const ModelParams& p, const Scenario& s, Index k) {
  return map_top_k(placement_scores(p, s), k);
}

SampleGrad sample_gradient(const ModelParams& p, ModelParams& g, const TaskContext& ctx,
                           const Scenario& s, const Vector& z, const TrainConfig& cfg,
                           const DecisionConfig& dc) {
  Forward f = forward(p, ctx, s, z, cfg, dc);
  const Vector y = scenario_target(s);
  SampleGrad out;
  out.mse = reconstruction_loss(f.yhat, y);
  out.task = task_loss(f, ctx, s, cfg, dc);

  // Decision head gradient. For no_dfl the head still learns its task, but
  // on a detached prediction.
  Vector dyhat_task;
  if (cfg.task == Task::evac) {
    const Vector dd = evac_loss_grad(f.alloc, true_route_costs(s, ctx, dc), ctx.evac, dc.gamma_assign);
    dyhat_task = evac_head_backward(f.evac_cache, dd, p.evac, ctx.evac, ctx.n_cells, g.evac);
  } else {
    const Matrix dP = match_loss_grad(f.P, true_match_costs(s, ctx, dc), ctx.match.hangar_caps, dc.gamma_match);
    const Matrix dS = sinkhorn_backward(f.sinkhorn_cache, dP);
    const Vector dimpact = match_head_backward(f.match_cache, dS, p.match, g.match);
    dyhat_task = ctx.impact_op.transpose() * dimpact;
  }

  Vector dyhat;
  if (cfg.variant == Variant::no_dfl) {
    out.loss = out.mse;
    dyhat = reconstruction_loss_grad(f.yhat, y);
  } else {
    out.loss = out.task;
    dyhat = std::move(dyhat_task);
  }

  std::vector<Matrix> dinputs;
  if (!p.linear.empty()) {
    dinputs.assign(f.inputs.size(), Matrix::Zero(f.inputs.back().rows(), f.inputs.back().cols()));
    dinputs.back() = linear_recon_backward(f.inputs.back(), dyhat, p.linear, g.linear);
  } else {
    dinputs = rollout_backward(ctx.norm_adj, f.rollout, dyhat, p.st, g.st);
  }
  out.dz = placement_gradient(s, dinputs);
  return out;
}

// ---------------------------------------------------------------- training

namespace {

void zero(ModelParams& g) {
  for (auto& t : g.tensors()) t.value->setZero();
}

std::vector<std::vector<Index>> make_batches(const std::vector<Index>& train, Index batch_size,
                                             std::uint64_t seed, std::uint64_t stream) {
  std::vector<Index> order = train;
  Rng rng = make_stream(seed, stream);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

/// Evaluates `item(j, grads)` for every batch entry with per-thread gradient
/// buffers, summing into `total` in batch order.
template <typename Item>
void accumulate_batch(Index n_items, const ModelParams& like, std::vector<ModelParams>& buffers,
                      ModelParams& total, Item&& item) {
  const auto wave = static_cast<Index>(worker_threads());
  if (static_cast<Index>(buffers.size()) < std::min(wave, n_items)) {
    buffers.resize(static_cast<std::size_t>(std::min(wave, n_items)), zeros_like(like));
  }
  for (Index start = 0; start < n_items; start += wave) {
    const Index stop = std::min(n_items, start + wave);
    parallel_for(start, stop, [&](Index j) {
      ModelParams& buf = buffers[static_cast<std::size_t>(j - start)];
      zero(buf);
      item(j, buf);
    });
    for (Index j = start; j < stop; ++j) axpy(total, buffers[static_cast<std::size_t>(j - start)]);
  }
}

void check_loss(double v, const std::string& phase, Index epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(phase + " diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
  }
}

void check_step(const ModelParams& p, const std::string& phase, Index epoch) {
  try {
    check_finite_params(p, "params");
  } catch (const NumericError& e) {
    throw NumericError(phase + " diverged at epoch " + std::to_string(epoch) + ": " + e.what());
  }
}

Vector pretrain_placement(const TaskContext& ctx, const TrainConfig& cfg, Index epoch, Index item) {
  if (cfg.pretrain_placement == PretrainPlacement::fixed) {
    std::vector<Index> cells = ctx.fixed_sensor_cells;
    if (static_cast<Index>(cells.size()) > cfg.K) cells.resize(static_cast<std::size_t>(cfg.K));
    return placement_from_cells(ctx.n_cells, cells).z;
  }
  Rng rng(mix(cfg.seed, kStreamPretrainZ + static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(item)));
  std::vector<Index> all(static_cast<std::size_t>(ctx.n_cells));
  std::iota(all.begin(), all.end(), Index{0});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(std::min(cfg.K, ctx.n_cells)));
  return placement_from_cells(ctx.n_cells, all).z;
}

}  // namespace

std::vector<EpochLog> pretrain(ModelParams& p, const TaskContext& ctx,
                               const std::vector<Scenario>& scenarios, const Split& split,
                               const TrainConfig& cfg, const Progress& progress) {
  validate(cfg);
  if (scenarios.empty() || split.train.empty()) throw std::invalid_argument("pretrain: no training scenarios");
  std::vector<EpochLog> history;
  if (cfg.pretrain_epochs == 0) return history;

  Adam<ModelParams> adam(p, AdamConfig{cfg.lr});
  ModelParams grads = zeros_like(p);
  std::vector<ModelParams> buffers;
  TrainConfig mse_cfg = cfg;
  mse_cfg.variant = Variant::no_dfl;  // reconstruction objective

  for (Index epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    double epoch_loss = 0.0;
    Index seen = 0;
    const auto batches = make_batches(split.train, cfg.batch_size, cfg.seed,
                                      kStreamShuffle + static_cast<std::uint64_t>(epoch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      const auto n = static_cast<Index>(batch.size());
      std::vector<double> losses(batch.size());
      zero(grads);
      accumulate_batch(n, p, buffers, grads, [&](Index j, ModelParams& g) {
        const Scenario& s = scenarios[static_cast<std::size_t>(batch[static_cast<std::size_t>(j)])];
        const Vector z = pretrain_placement(ctx, cfg, epoch, batch[static_cast<std::size_t>(j)]);
        Forward f;
        f.inputs = assemble_window(s, z, input_steps(s, cfg));
        f.yhat = rollout(ctx.norm_adj, f.inputs, p.st, &f.rollout);
        const Vector y = scenario_target(s);
        losses[static_cast<std::size_t>(j)] = reconstruction_loss(f.yhat, y);
        rollout_backward(ctx.norm_adj, f.rollout, reconstruction_loss_grad(f.yhat, y), p.st, g.st);
      });
      for (double l : losses) {
        check_loss(l, "pretrain", epoch);
        epoch_loss += l;
      }
      seen += n;
      // Only the reconstruction model receives gradient here.
      for (auto& t : grads.tensors()) *t.value /= static_cast<double>(n);
      adam.step(p, grads);
      check_step(p, "pretrain", epoch);
    }
    double val = 0.0;
    for (Index i : split.val) {
      const Scenario& s = scenarios[static_cast<std::size_t>(i)];
      const Vector z = pretrain_placement(ctx, cfg, 0, i);
      val += reconstruction_loss(predict(p, ctx, s, z, mse_cfg), scenario_target(s));
    }
    val /= static_cast<double>(std::max<std::size_t>(split.val.size(), 1));
    EpochLog log{"pretrain", epoch, epoch_loss / static_cast<double>(seen), val};
    history.push_back(log);
    if (progress) progress(log);
  }
  return history;
}

namespace {

double validation_loss(const ModelParams& p, const TaskContext& ctx, const std::vector<Scenario>& scenarios,
                       const std::vector<Index>& val, const TrainConfig& cfg, const DecisionConfig& dc) {
  if (val.empty()) return 0.0;
  std::vector<double> losses(val.size());
  parallel_for(0, static_cast<Index>(val.size()), [&](Index j) {
    const Scenario& s = scenarios[static_cast<std::size_t>(val[static_cast<std::size_t>(j)])];
    const Vector z = learned_placement(p, s, cfg.K).z;
    const Forward f = forward(p, ctx, s, z, cfg, dc);
    losses[static_cast<std::size_t>(j)] = cfg.variant == Variant::no_dfl
                                              ? reconstruction_loss(f.yhat, scenario_target(s))
                                              : task_loss(f, ctx, s, cfg, dc);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(val.size());
}

}  // namespace

std::vector<EpochLog> train_e2e(ModelParams& p, const TaskContext& ctx,
                                const std::vector<Scenario>& scenarios, const Split& split,
                                const TrainConfig& cfg, const DecisionConfig& dc,
                                const Progress& progress) {
  validate(cfg);
  validate(dc);
  if (scenarios.empty() || split.train.empty()) throw std::invalid_argument("train_e2e: no training scenarios");
  if (cfg.variant == Variant::no_st && p.linear.empty()) {
    throw std::invalid_argument("train_e2e: no_st variant needs linear reconstruction parameters");
  }
  std::vector<EpochLog> history;
  if (cfg.e2e_epochs == 0) return history;

  const bool use_imle = cfg.variant != Variant::no_imle;
  Adam<ModelParams> adam(p, AdamConfig{cfg.lr});
  ModelParams grads = zeros_like(p);
  std::vector<ModelParams> buffers;
  ModelParams best = p;
  double best_val = std::numeric_limits<double>::infinity();

  for (Index epoch = 0; epoch < cfg.e2e_epochs; ++epoch) {
    double epoch_loss = 0.0;
    Index seen = 0;
    const auto batches = make_batches(split.train, cfg.batch_size, cfg.seed,
                                      kStreamShuffle + 500000 + static_cast<std::uint64_t>(epoch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      const auto n = static_cast<Index>(batch.size());
      Index k = cfg.K;
      if (cfg.sample_k) {
        Rng krng(mix(cfg.seed, kStreamBatchK + static_cast<std::uint64_t>(epoch), b));
        k = std::uniform_int_distribution<Index>(1, cfg.K)(krng);
      }
      std::vector<double> losses(batch.size());
      zero(grads);
      accumulate_batch(n, p, buffers, grads, [&](Index j, ModelParams& g) {
        const Index idx = batch[static_cast<std::size_t>(j)];
        const Scenario& s = scenarios[static_cast<std::size_t>(idx)];
        ScoringCache sc;
        const Vector theta = score_locations(temporal_mean(s.features), p.scorer, &sc);
        Vector dtheta;
        if (use_imle) {
          Rng nrng(mix(cfg.seed, kStreamNoise + static_cast<std::uint64_t>(epoch) * 100003 + b,
                       static_cast<std::uint64_t>(j)));
          const NoiseVector eps = sample_sum_of_gamma(theta.size(), cfg.imle.sog_k, cfg.imle.s_terms,
                                                      cfg.imle.temperature, nrng);
          const PlacementVector z = map_top_k(theta + eps.eps, k);
          const SampleGrad sg = sample_gradient(p, g, ctx, s, z.z, cfg, dc);
          losses[static_cast<std::size_t>(j)] = sg.loss;
          const Vector target = imle_target(theta, sg.dz, cfg.imle.lambda);
          const PlacementVector z_target = map_top_k(target + eps.eps, k);
          dtheta = imle_gradient(z, z_target);
        } else {
          const PlacementVector z = map_top_k(theta, k);
          const SampleGrad sg = sample_gradient(p, g, ctx, s, z.z, cfg, dc);
          losses[static_cast<std::size_t>(j)] = sg.loss;
          dtheta = sg.dz;  // straight-through
        }
        score_backward(sc, dtheta, p.scorer, g.scorer);
      });
      for (double l : losses) {
        check_loss(l, "train_e2e", epoch);
        epoch_loss += l;
      }
      seen += n;
      for (auto& t : grads.tensors()) *t.value /= static_cast<double>(n);
      adam.step(p, grads);
      check_step(p, "train_e2e", epoch);
    }
    const double val = validation_loss(p, ctx, scenarios, split.val, cfg, dc);
    check_loss(val, "train_e2e validation", epoch);
    if (val < best_val) {
      best_val = val;
      best = p;
    }
    EpochLog log{"e2e", epoch, epoch_loss / static_cast<double>(seen), val};
    history.push_back(log);
    if (progress) progress(log);
  }
  if (cfg.keep_best) p = std::move(best);
  return history;
}

// ----------------------------------------------------------------- metrics

std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_metrics_csv(std::ostream& os, const MetricsTable& table) {
  os << "method,task,decision_cost,overflow,pred_mse,infer_time_s,seed\n";
  for (const auto& r : table) {
    os << r.method << ',' << r.task << ',' << format_sig6(r.decision_cost) << ',' << format_sig6(r.overflow)
       << ',' << format_sig6(r.pred_mse) << ',' << format_sig6(r.infer_time_s) << ',' << r.seed << '\n';
  }
}

namespace {

const char* kPlacementTokens = "fixed, pca";
const char* kImputerTokens = "idw, knn, oracle";
const char* kDeciderTokens = "ilp, iw";

std::string token(PlacementKind k) { return k == PlacementKind::fixed ? "fixed" : "pca"; }
std::string token(ImputerKind k) {
  return k == ImputerKind::idw ? "idw" : k == ImputerKind::knn ? "knn" : "oracle";
}
std::string token(DeciderKind k) { return k == DeciderKind::ilp ? "ilp" : "iw"; }

std::string valid_tokens() {
  return std::string("placement {") + kPlacementTokens + "}, imputer {" + kImputerTokens + "}, decider {" +
         kDeciderTokens + "}, or 'learned'";
}

}  // namespace

std::string MethodSpec::name() const { return token(placement) + "+" + token(imputer) + "+" + token(decider); }

MethodSpec parse_method(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '+')) parts.push_back(part);
  if (parts.size() != 3) {
    throw ConfigError("method '" + s + "' must be placement+imputer+decider; valid tokens: " + valid_tokens());
  }
  MethodSpec m;
  if (parts[0] == "fixed") m.placement = PlacementKind::fixed;
  else if (parts[0] == "pca") m.placement = PlacementKind::pca;
  else throw ConfigError("unknown placement token '" + parts[0] + "'; valid tokens: " + valid_tokens());
  if (parts[1] == "idw") m.imputer = ImputerKind::idw;
  else if (parts[1] == "knn") m.imputer = ImputerKind::knn;
  else if (parts[1] == "oracle") m.imputer = ImputerKind::oracle;
  else throw ConfigError("unknown imputer token '" + parts[1] + "'; valid tokens: " + valid_tokens());
  if (parts[2] == "ilp") m.decider = DeciderKind::ilp;
  else if (parts[2] == "iw") m.decider = DeciderKind::iw;
  else throw ConfigError("unknown decider token '" + parts[2] + "'; valid tokens: " + valid_tokens());
  return m;
}

std::vector<MethodSpec> all_baselines() {
  std::vector<MethodSpec> out;
  for (PlacementKind p : {PlacementKind::fixed, PlacementKind::pca}) {
    for (ImputerKind i : {ImputerKind::idw, ImputerKind::knn}) {
      for (DeciderKind d : {DeciderKind::ilp, DeciderKind::iw}) out.push_back({p, i, d});
    }
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  return std::max(s, 1e-9);
}

struct DecisionOutcome {
  double cost = 0.0;
  double overflow = 0.0;
};

DecisionOutcome decide_from_prediction(DeciderKind decider, const Vector& yhat, const TaskContext& ctx,
                                       const Scenario& s, const TrainConfig& cfg, const DecisionConfig& dc) {
  DecisionOutcome out;
  if (cfg.task == Task::evac) {
    const Vector c_hat = route_costs(yhat, ctx.evac, dc.depth_cost_coeff);
    const Vector c_true = true_route_costs(s, ctx, dc);
    if (decider == DeciderKind::ilp) {
      const ExactAllocation a = solve_evac_exact(c_hat, ctx.evac);
      Vector d(static_cast<Index>(a.d.size()));
      for (std::size_t r = 0; r < a.d.size(); ++r) d[static_cast<Index>(r)] = static_cast<double>(a.d[r]);
      out.cost = allocation_cost(a.d, c_true);
      out.overflow = evac_overflow(d, ctx.evac);
    } else {
      const Allocation soft = inverse_weighted_evac(c_hat, ctx.evac);
      out.cost = allocation_cost(round_allocation(soft, ctx.evac).d, c_true);
      out.overflow = evac_overflow(soft.d, ctx.evac);
    }
  } else {
    const Matrix c_hat = match_costs(yhat, ctx.dist_norm, ctx.impact_op, dc.impact_weight);
    const Matrix c_true = true_match_costs(s, ctx, dc);
    const Matching m = decider == DeciderKind::ilp ? solve_matching_exact(c_hat) : inverse_weighted_matching(c_hat);
    Matrix P = Matrix::Zero(c_hat.rows(), c_hat.cols());
    for (std::size_t i = 0; i < m.hangar_of.size(); ++i) P(static_cast<Index>(i), m.hangar_of[i]) = 1.0;
    out.cost = matching_cost(m, c_true);
    out.overflow = match_overflow(P, ctx.match.hangar_caps);
  }
  return out;
}

MetricsRow finish_row(std::string method, const TrainConfig& cfg, const std::vector<double>& cost,
                      const std::vector<double>& overflow, const std::vector<double>& mse,
                      const std::vector<double>& time) {
  MetricsRow r;
  r.method = std::move(method);
  r.task = to_string(cfg.task);
  r.seed = cfg.seed;
  const double n = static_cast<double>(std::max<std::size_t>(cost.size(), 1));
  for (std::size_t i = 0; i < cost.size(); ++i) {
    r.decision_cost += cost[i] / n;
    r.overflow += overflow[i] / n;
    r.pred_mse += mse[i] / n;
    r.infer_time_s += time[i] / n;
  }
  r.infer_time_s = std::max(r.infer_time_s, 1e-9);
  return r;
}

}  // namespace

MetricsRow evaluate_baseline(const MethodSpec& m, const TaskContext& ctx,
                             const std::vector<Scenario>& scenarios, const Split& split,
                             const TrainConfig& cfg, const DecisionConfig& dc) {
  if (split.test.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  std::vector<Index> cells;
  if (m.placement == PlacementKind::fixed) {
    if (static_cast<Index>(ctx.fixed_sensor_cells.size()) < cfg.K) {
      throw ConfigError("fixed placement has fewer sites than K");
    }
    cells.assign(ctx.fixed_sensor_cells.begin(), ctx.fixed_sensor_cells.begin() + cfg.K);
  } else {
    std::vector<Matrix> frames;
    for (Index i : split.train) {
      const auto& f = scenarios[static_cast<std::size_t>(i)].features;
      frames.insert(frames.end(), f.begin(), f.end());
    }
    cells = pca_placement(frames, cfg.K).selected();
  }

  const std::size_t n = split.test.size();
  std::vector<double> cost(n), overflow(n), mse(n), time(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Scenario& s = scenarios[static_cast<std::size_t>(split.test[j])];
    const Vector y = scenario_target(s);
    const auto t0 = Clock::now();
    // Sensors report depth at the last frame the model is allowed to see.
    const Vector seen = s.depths.row(input_steps(s, cfg) - 1).transpose();
    Vector yhat;
    switch (m.imputer) {
      case ImputerKind::idw: yhat = idw_impute(read_sensors(seen, cells), ctx.graph); break;
      case ImputerKind::knn:
        yhat = knn_impute(read_sensors(seen, cells), ctx.graph, std::min<Index>(cfg.knn_k, static_cast<Index>(cells.size())));
        break;
      case ImputerKind::oracle: yhat = y; break;
    }
    const DecisionOutcome d = decide_from_prediction(m.decider, yhat, ctx, s, cfg, dc);
    time[j] = seconds_since(t0);
    cost[j] = d.cost;
    overflow[j] = d.overflow;
    mse[j] = reconstruction_loss(yhat, y);
  }
  return finish_row(m.name(), cfg, cost, overflow, mse, time);
}

MetricsRow evaluate_learned(const ModelParams& p, const std::string& name, const TaskContext& ctx,
                            const std::vector<Scenario>& scenarios, const std::vector<Index>& eval_set,
                            const TrainConfig& cfg, const DecisionConfig& dc) {
  if (eval_set.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
  const std::size_t n = eval_set.size();
  std::vector<double> cost(n), overflow(n), mse(n), time(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Scenario& s = scenarios[static_cast<std::size_t>(eval_set[j])];
    const auto t0 = Clock::now();
    const PlacementVector z = learned_placement(p, s, cfg.K);
    const Forward f = forward(p, ctx, s, z.z, cfg, dc);
    if (cfg.task == Task::evac) {
      cost[j] = allocation_cost(round_allocation(f.alloc, ctx.evac).d, true_route_costs(s, ctx, dc));
      overflow[j] = evac_overflow(f.alloc.d, ctx.evac);
    } else {
      cost[j] = matching_cost(extract_matching(f.P), true_match_costs(s, ctx, dc));
      overflow[j] = match_overflow(f.P, ctx.match.hangar_caps);
    }
    time[j] = seconds_since(t0);
    mse[j] = reconstruction_loss(f.yhat, scenario_target(s));
  }
  return finish_row(name, cfg, cost, overflow, mse, time);
}

AblationResult run_ablation(const ScenarioConfig& sc, const TrainConfig& cfg, const DecisionConfig& dc,
                            const Progress& progress) {
  validate(cfg);
  validate(dc);
  ScenarioConfig suite_cfg = sc;
  suite_cfg.seed = cfg.seed;
  suite_cfg.window = cfg.window;
  const std::vector<Scenario> scenarios = generate_suite(suite_cfg, cfg.n_scenarios);
  const TaskContext ctx = make_context(scenarios.front(), dc);
  const Split split = split_scenarios(static_cast<Index>(scenarios.size()), cfg.train_frac, cfg.val_frac);

  TrainConfig base_cfg = cfg;
  base_cfg.variant = Variant::full;
  ModelParams pretrained = init_params(ctx, base_cfg, dc);
  AblationResult result;
  const std::vector<EpochLog> pre_log = pretrain(pretrained, ctx, scenarios, split, base_cfg, progress);

  for (Variant v : {Variant::full, Variant::no_st, Variant::no_imle, Variant::no_dfl}) {
    TrainConfig vc = cfg;
    vc.variant = v;
    ModelParams p;
    std::vector<EpochLog> log;
    if (v == Variant::no_st) {
      p = init_params(ctx, vc, dc);  // no reconstruction pre-training
    } else {
      p = pretrained;
      log = pre_log;
    }
    const auto e2e_log = train_e2e(p, ctx, scenarios, split, vc, dc, progress);
    log.insert(log.end(), e2e_log.begin(), e2e_log.end());
    result.table.push_back(evaluate_learned(p, to_string(v), ctx, scenarios, split.test, vc, dc));
    result.logs.push_back(std::move(log));
  }
  return result;
}

}  // namespace dfsense
