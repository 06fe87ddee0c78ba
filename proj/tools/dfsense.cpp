// dfsense: scenario generation, training, evaluation and ablations.

#include "dfsense/io.hpp"
#include "dfsense/pipeline.hpp"

#include "CLI11.hpp"

#include <array>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace dfsense;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.apply_seed();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& from_config, const char* what) {
  const std::string v = flag.empty() ? from_config : flag;
  if (v.empty()) throw ConfigError(std::string("missing ") + what);
  return v;
}

std::vector<Scenario> obtain_suite(const RunConfig& cfg, const std::string& scenarios_flag) {
  const std::string dir = scenarios_flag.empty() ? cfg.paths.scenarios : scenarios_flag;
  if (!dir.empty()) {
    auto suite = load_suite(dir);
    for (const auto& s : suite) {
      if (s.window() != cfg.train.window) throw ConfigError("scenario window does not match train.window");
    }
    return suite;
  }
  return generate_suite(cfg.scenario, cfg.train.n_scenarios);
}

void log_epoch(const EpochLog& e) {
  std::cerr << e.phase << " epoch " << e.epoch << " train " << format_sig6(e.train_loss) << " val "
            << format_sig6(e.val_loss) << '\n';
}

template <typename F>
void with_output(const std::string& path, F&& f) {
  if (path.empty() || path == "-") {
    f(std::cout);
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  f(out);
}

// ------------------------------------------------------------ subcommands

int cmd_simulate(const Common& c, const std::string& out_flag, Index count) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = pick(out_flag, cfg.paths.out, "output directory (--out)");
  if (count < 1) throw ConfigError("--count must be >= 1");
  std::vector<Scenario> suite;
  if (count == 1) {
    suite.push_back(run_scenario(cfg.scenario));
    save_scenario(suite.front(), out);
  } else {
    suite = generate_suite(cfg.scenario, count);
    save_suite(suite, out);
  }
  const Scenario& s = suite.front();
  double worst = 0.0;
  for (const auto& x : suite) worst = std::max(worst, x.mass_balance_rel_err);
  std::cout << "scenarios " << suite.size() << "\nN " << s.n_cells() << "\nT " << s.window() << "\nK "
            << cfg.train.K << "\nevac routes " << s.evac.n_routes() << " shelters " << s.evac.n_shelters()
            << " demand " << s.evac.demand << "\nmatch aircraft " << s.match.n_aircraft() << " hangars "
            << s.match.n_hangars() << "\nmass balance rel err (max) " << format_sig6(worst) << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& scen_flag, const std::string& out_flag,
              const std::string& variant, std::optional<Index> epochs, const std::string& task) {
  RunConfig cfg = resolve_config(c);
  if (!variant.empty()) cfg.train.variant = parse_variant(variant);
  if (!task.empty()) cfg.train.task = parse_task(task);
  if (epochs) {
    cfg.train.pretrain_epochs = *epochs;
    cfg.train.e2e_epochs = *epochs;
  }
  validate(cfg.train);
  const fs::path out = pick(out_flag, cfg.paths.out, "output directory (--out)");
  const auto suite = obtain_suite(cfg, scen_flag);
  const TaskContext ctx = make_context(suite.front(), cfg.decision);
  const Split split = split_scenarios(static_cast<Index>(suite.size()), cfg.train.train_frac, cfg.train.val_frac);

  ModelParams p = init_params(ctx, cfg.train, cfg.decision);
  std::vector<EpochLog> log;
  if (cfg.train.variant != Variant::no_st) log = pretrain(p, ctx, suite, split, cfg.train, log_epoch);
  const auto e2e = train_e2e(p, ctx, suite, split, cfg.train, cfg.decision, log_epoch);
  log.insert(log.end(), e2e.begin(), e2e.end());

  save_checkpoint(p, cfg.train, out);
  with_output((out / "train_log.csv").string(), [&](std::ostream& os) { write_epoch_log_csv(os, log); });
  std::cout << "checkpoint " << (out / "params.json").string() << "\nepochs logged " << log.size() << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& scen_flag, const std::vector<std::string>& methods,
                 bool all, const std::string& ckpt_flag, const std::string& task, const std::string& out) {
  const RunConfig cfg = resolve_config(c);
  std::vector<MethodSpec> specs;
  bool want_learned = false;
  for (const auto& m : methods) {
    if (m == "learned") want_learned = true;
    else specs.push_back(parse_method(m));
  }
  if (all) {
    for (const auto& m : all_baselines()) specs.push_back(m);
  }
  const std::string ckpt = ckpt_flag.empty() ? cfg.paths.checkpoint : ckpt_flag;
  if (want_learned && ckpt.empty()) throw ConfigError("method 'learned' requires --checkpoint");
  if (all && !ckpt.empty()) want_learned = true;
  if (specs.empty() && !want_learned) throw ConfigError("nothing to evaluate: pass --method or --all-baselines");

  std::vector<Task> tasks;
  if (task.empty() || task == "both") tasks = {Task::evac, Task::match};
  else tasks = {parse_task(task)};

  const auto suite = obtain_suite(cfg, scen_flag);
  const TaskContext ctx = make_context(suite.front(), cfg.decision);
  const Split split = split_scenarios(static_cast<Index>(suite.size()), cfg.train.train_frac, cfg.train.val_frac);

  MetricsTable table;
  for (Task t : tasks) {
    TrainConfig tc = cfg.train;
    tc.task = t;
    for (const auto& m : specs) table.push_back(evaluate_baseline(m, ctx, suite, split, tc, cfg.decision));
  }
  if (want_learned) {
    TrainConfig lc = checkpoint_config(ckpt);
    lc.seed = cfg.seed;
    if (!task.empty() && task != "both" && parse_task(task) != lc.task) {
      throw ConfigError("checkpoint was trained for task " + to_string(lc.task));
    }
    ModelParams p = init_params(ctx, lc, cfg.decision);
    load_checkpoint(p, ckpt);
    table.push_back(evaluate_learned(p, "learned", ctx, suite, split.test, lc, cfg.decision));
  }
  with_output(out, [&](std::ostream& os) { write_metrics_csv(os, table); });
  return 0;
}

int cmd_ablate(const Common& c, const std::string& out_flag, Index seeds, const std::string& task) {
  RunConfig cfg = resolve_config(c);
  if (!task.empty()) cfg.train.task = parse_task(task);
  if (seeds < 1) throw ConfigError("--seeds must be >= 1");
  const fs::path out = pick(out_flag, cfg.paths.out, "output directory (--out)");
  fs::create_directories(out);

  MetricsTable table;
  std::ofstream log_csv(out / "ablation_log.csv");
  log_csv << "seed,variant,phase,epoch,train_loss,val_loss\n";
  for (Index k = 0; k < seeds; ++k) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed + static_cast<std::uint64_t>(k);
    std::cerr << "ablation seed " << tc.seed << '\n';
    const AblationResult r = run_ablation(cfg.scenario, tc, cfg.decision, log_epoch);
    for (std::size_t v = 0; v < r.table.size(); ++v) {
      for (const auto& e : r.logs[v]) {
        log_csv << tc.seed << ',' << r.table[v].method << ',' << e.phase << ',' << e.epoch << ','
                << format_sig6(e.train_loss) << ',' << format_sig6(e.val_loss) << '\n';
      }
    }
    table.insert(table.end(), r.table.begin(), r.table.end());
  }
  with_output((out / "ablation.csv").string(), [&](std::ostream& os) { write_metrics_csv(os, table); });

  // Plot data: per-variant means over seeds.
  std::vector<std::string> order;
  std::map<std::string, std::array<double, 3>> sums;
  for (const auto& r : table) {
    if (!sums.count(r.method)) order.push_back(r.method);
    auto& s = sums[r.method];
    s[0] += r.decision_cost;
    s[1] += r.pred_mse;
    s[2] += 1.0;
  }
  with_output((out / "ablation_plot.csv").string(), [&](std::ostream& os) {
    os << "variant,mean_decision_cost,mean_pred_mse,seeds\n";
    for (const auto& m : order) {
      const auto& s = sums[m];
      os << m << ',' << format_sig6(s[0] / s[2]) << ',' << format_sig6(s[1] / s[2]) << ',' << s[2] << '\n';
    }
  });
  with_output((out / "ablation.gp").string(), [&](std::ostream& os) {
    os << "set datafile separator ','\nset style data histograms\nset style fill solid 0.6\n"
          "set key autotitle columnheader\nset multiplot layout 1,2\n"
          "set title 'decision cost'\nplot 'ablation_plot.csv' using 2:xtic(1)\n"
          "set title 'prediction MSE'\nplot 'ablation_plot.csv' using 3:xtic(1)\nunset multiplot\n";
  });
  write_metrics_csv(std::cout, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-focused flood sensor placement"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override the configured seed");

  auto* sim = app.add_subcommand("simulate", "Generate and persist flood scenarios");
  std::string sim_out;
  Index sim_count = 1;
  sim->add_option("--config", common.config, "Run configuration (JSON)");
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_option("--count", sim_count, "Number of scenarios (a suite when > 1)");

  auto* train = app.add_subcommand("train", "Pre-train and train end to end; writes a checkpoint");
  std::string train_scen, train_out, train_variant, train_task;
  Index train_epochs = 0;
  train->add_option("--config", common.config, "Run configuration (JSON)");
  train->add_option("--scenarios", train_scen, "Scenario or suite directory (default: generate)");
  train->add_option("--out", train_out, "Checkpoint directory");
  train->add_option("--variant", train_variant, "full, no_st, no_imle or no_dfl");
  auto* epochs_opt = train->add_option("--epochs", train_epochs, "Epochs for both training phases");
  train->add_option("--task", train_task, "evac or match");

  auto* eval = app.add_subcommand("evaluate", "Evaluate baselines and/or a checkpoint");
  std::string eval_scen, eval_ckpt, eval_task, eval_out;
  std::vector<std::string> eval_methods;
  bool eval_all = false;
  eval->add_option("--config", common.config, "Run configuration (JSON)");
  eval->add_option("--scenarios", eval_scen, "Scenario or suite directory (default: generate)");
  eval->add_option("--method", eval_methods, "placement+imputer+decider, or 'learned'");
  eval->add_flag("--all-baselines", eval_all, "All eight baseline combinations");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory for 'learned'");
  eval->add_option("--task", eval_task, "evac, match or both (default both)");
  eval->add_option("--out", eval_out, "Metrics CSV path (default stdout)");

  auto* abl = app.add_subcommand("ablate", "Run the four ablation variants");
  std::string abl_out, abl_task;
  Index abl_seeds = 1;
  abl->add_option("--config", common.config, "Run configuration (JSON)");
  abl->add_option("--out", abl_out, "Output directory");
  abl->add_option("--seeds", abl_seeds, "Consecutive seeds starting at the configured seed");
  abl->add_option("--task", abl_task, "evac or match");

  auto* defaults = app.add_subcommand("config-default", "Print the default run configuration");
  std::string def_out;
  defaults->add_option("--out", def_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (*seed_opt) common.seed = seed_value;

  try {
    if (*sim) return cmd_simulate(common, sim_out, sim_count);
    if (*train) {
      std::optional<Index> epochs;
      if (*epochs_opt) epochs = train_epochs;
      return cmd_train(common, train_scen, train_out, train_variant, epochs, train_task);
    }
    if (*eval) return cmd_evaluate(common, eval_scen, eval_methods, eval_all, eval_ckpt, eval_task, eval_out);
    if (*abl) return cmd_ablate(common, abl_out, abl_seeds, abl_task);
    if (*defaults) {
      RunConfig cfg;
      if (common.seed) cfg.seed = *common.seed;
      with_output(def_out, [&](std::ostream& os) { os << to_json(cfg).dump(2) << '\n'; });
      return 0;
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
