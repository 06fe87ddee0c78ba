#pragma once
// Run configuration, scenario persistence and parameter checkpoints.
//
// Scenario directory layout:
//   meta.json     version, config, seed, shapes, terrain, task instances
//   depths.f32    T x N          row-major, little-endian float32
//   features.f32  T x N x 4      (time, cell, feature)
//   insitu.f32    T x N x 2      (time, cell, channel)
// A suite directory holds one such directory per scenario (scenario_0000, ...).

#include "dfsense/pipeline.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dfsense {

inline constexpr const char* kScenarioVersion = "dfsense-scenario/1";
inline constexpr const char* kCheckpointVersion = "dfsense-params/1";

struct Paths {
  std::string scenarios;   // scenario or suite directory ("" = generate in memory)
  std::string out;         // output directory
  std::string checkpoint;  // checkpoint directory for the learned method
};

struct RunConfig {
  std::uint64_t seed = 0;  // storm realizations and training randomness
  ScenarioConfig scenario;
  TrainConfig train;
  DecisionConfig decision;
  Paths paths;

  /// Copies the master seed into the scenario and training configs.
  void apply_seed();
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Unknown keys are rejected with ConfigError; missing keys keep defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

// ------------------------------------------------------------- scenarios

void save_scenario(const Scenario& s, const std::filesystem::path& dir);
Scenario load_scenario(const std::filesystem::path& dir);

/// Writes scenario_0000, scenario_0001, ... under dir.
void save_suite(const std::vector<Scenario>& suite, const std::filesystem::path& dir);
/// Loads a single scenario directory or a suite directory.
std::vector<Scenario> load_suite(const std::filesystem::path& dir);

void write_f32(const std::filesystem::path& path, const std::vector<float>& values);
std::vector<float> read_f32(const std::filesystem::path& path);

// ----------------------------------------------------------- checkpoints

void save_checkpoint(const ModelParams& p, const TrainConfig& cfg, const std::filesystem::path& dir);
/// Reads the training config stored with a checkpoint.
TrainConfig checkpoint_config(const std::filesystem::path& dir);
/// Fills pre-shaped params; names and shapes must match the checkpoint.
void load_checkpoint(ModelParams& p, const std::filesystem::path& dir);

void write_epoch_log_csv(std::ostream& os, const std::vector<EpochLog>& log,
                         const std::string& variant = "");

}  // namespace dfsense
