#include "dfsense/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace dfsense {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads known keys of one JSON object and rejects the rest.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(label() + "." + key + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    const bool present = j_.contains(key);
    get(key, s);
    if (present) out = parse(s);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + label() + "." + k + "'");
    }
  }

 private:
  std::string label() const { return where_.empty() ? "<root>" : where_; }
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

EvacPooling parse_pooling(const std::string& s) {
  if (s == "global") return EvacPooling::global;
  if (s == "per_route") return EvacPooling::per_route;
  throw ConfigError("unknown evac_pooling '" + s + "' (valid: global, per_route)");
}

std::string to_string(EvacPooling p) { return p == EvacPooling::global ? "global" : "per_route"; }

ordered_json to_json_storm(const StormConfig& s) {
  ordered_json j;
  j["amplitude"] = s.amplitude;
  j["peak_rain"] = s.peak_rain;
  j["base_rain_max"] = s.base_rain_max;
  j["radius_min"] = s.radius_min;
  j["radius_max"] = s.radius_max;
  j["inflow_max"] = s.inflow_max;
  j["antecedent_max"] = s.antecedent_max;
  return j;
}

StormConfig storm_from_json(const json& j) {
  StormConfig s;
  StrictObject o(j, "scenario.storm");
  o.get("amplitude", s.amplitude);
  o.get("peak_rain", s.peak_rain);
  o.get("base_rain_max", s.base_rain_max);
  o.get("radius_min", s.radius_min);
  o.get("radius_max", s.radius_max);
  o.get("inflow_max", s.inflow_max);
  o.get("antecedent_max", s.antecedent_max);
  o.finish();
  return s;
}

ordered_json to_json_train(const TrainConfig& c, bool with_seed) {
  ordered_json j;
  j["batch_size"] = c.batch_size;
  j["window"] = c.window;
  j["lr"] = c.lr;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["e2e_epochs"] = c.e2e_epochs;
  j["K"] = c.K;
  j["task"] = to_string(c.task);
  j["variant"] = to_string(c.variant);
  j["imle"] = {{"lambda", c.imle.lambda},
               {"sog_k", c.imle.sog_k},
               {"s_terms", c.imle.s_terms},
               {"temperature", c.imle.temperature}};
  j["pretrain_placement"] = to_string(c.pretrain_placement);
  j["sample_k"] = c.sample_k;
  j["forecast"] = c.forecast;
  j["n_scenarios"] = c.n_scenarios;
  j["train_frac"] = c.train_frac;
  j["val_frac"] = c.val_frac;
  j["knn_k"] = c.knn_k;
  j["keep_best"] = c.keep_best;
  if (with_seed) j["seed"] = c.seed;
  return j;
}

TrainConfig train_from_json(const json& j, bool with_seed) {
  TrainConfig c;
  StrictObject o(j, "train");
  o.get("batch_size", c.batch_size);
  o.get("window", c.window);
  o.get("lr", c.lr);
  o.get("pretrain_epochs", c.pretrain_epochs);
  o.get("e2e_epochs", c.e2e_epochs);
  o.get("K", c.K);
  o.get_enum("task", c.task, parse_task);
  o.get_enum("variant", c.variant, parse_variant);
  if (const json* im = o.child("imle")) {
    StrictObject io(*im, "train.imle");
    io.get("lambda", c.imle.lambda);
    io.get("sog_k", c.imle.sog_k);
    io.get("s_terms", c.imle.s_terms);
    io.get("temperature", c.imle.temperature);
    io.finish();
  }
  o.get_enum("pretrain_placement", c.pretrain_placement, parse_pretrain_placement);
  o.get("sample_k", c.sample_k);
  o.get("forecast", c.forecast);
  o.get("n_scenarios", c.n_scenarios);
  o.get("train_frac", c.train_frac);
  o.get("val_frac", c.val_frac);
  o.get("knn_k", c.knn_k);
  o.get("keep_best", c.keep_best);
  if (with_seed) o.get("seed", c.seed);
  o.finish();
  return c;
}

ordered_json to_json_decision(const DecisionConfig& d) {
  ordered_json j;
  j["gamma_assign"] = d.gamma_assign;
  j["gamma_match"] = d.gamma_match;
  j["sinkhorn_iters"] = d.sinkhorn_iters;
  j["evac_mlp_hidden"] = d.evac_mlp_hidden;
  j["match_mlp_hidden"] = d.match_mlp_hidden;
  j["depth_cost_coeff"] = d.depth_cost_coeff;
  j["impact_weight"] = d.impact_weight;
  j["impact_neighbors"] = d.impact_neighbors;
  j["evac_pooling"] = to_string(d.evac_pooling);
  return j;
}

DecisionConfig decision_from_json(const json& j) {
  DecisionConfig d;
  StrictObject o(j, "decision");
  o.get("gamma_assign", d.gamma_assign);
  o.get("gamma_match", d.gamma_match);
  o.get("sinkhorn_iters", d.sinkhorn_iters);
  o.get("evac_mlp_hidden", d.evac_mlp_hidden);
  o.get("match_mlp_hidden", d.match_mlp_hidden);
  o.get("depth_cost_coeff", d.depth_cost_coeff);
  o.get("impact_weight", d.impact_weight);
  o.get("impact_neighbors", d.impact_neighbors);
  o.get_enum("evac_pooling", d.evac_pooling, parse_pooling);
  o.finish();
  return d;
}

ordered_json scenario_config_json(const ScenarioConfig& c, bool with_seed) {
  ordered_json j;
  j["rows"] = c.rows;
  j["cols"] = c.cols;
  j["window"] = c.window;
  j["spinup_steps"] = c.spinup_steps;
  j["cell_size"] = c.cell_size;
  j["dt"] = c.dt;
  j["conductance"] = c.conductance;
  j["storm"] = to_json_storm(c.storm);
  j["terrain_seed"] = c.terrain_seed;
  if (with_seed) j["seed"] = c.seed;
  j["n_shelters"] = c.n_shelters;
  j["routes_per_shelter"] = c.routes_per_shelter;
  j["demand"] = c.demand;
  j["shelter_capacity"] = c.shelter_capacity;
  j["n_aircraft"] = c.n_aircraft;
  j["n_hangars"] = c.n_hangars;
  j["n_fixed_sensors"] = c.n_fixed_sensors;
  j["downslope_edges"] = c.downslope_edges;
  return j;
}

ScenarioConfig scenario_config_parse(const json& j, bool with_seed) {
  ScenarioConfig c;
  StrictObject o(j, "scenario");
  o.get("rows", c.rows);
  o.get("cols", c.cols);
  o.get("window", c.window);
  o.get("spinup_steps", c.spinup_steps);
  o.get("cell_size", c.cell_size);
  o.get("dt", c.dt);
  o.get("conductance", c.conductance);
  if (const json* st = o.child("storm")) c.storm = storm_from_json(*st);
  o.get("terrain_seed", c.terrain_seed);
  if (with_seed) o.get("seed", c.seed);
  o.get("n_shelters", c.n_shelters);
  o.get("routes_per_shelter", c.routes_per_shelter);
  o.get("demand", c.demand);
  o.get("shelter_capacity", c.shelter_capacity);
  o.get("n_aircraft", c.n_aircraft);
  o.get("n_hangars", c.n_hangars);
  o.get("n_fixed_sensors", c.n_fixed_sensors);
  o.get("downslope_edges", c.downslope_edges);
  o.finish();
  return c;
}

}  // namespace

void RunConfig::apply_seed() {
  scenario.seed = seed;
  train.seed = seed;
}

ordered_json to_json(const ScenarioConfig& cfg) { return scenario_config_json(cfg, true); }
ScenarioConfig scenario_config_from_json(const json& j) { return scenario_config_parse(j, true); }

ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["scenario"] = scenario_config_json(cfg.scenario, false);
  j["train"] = to_json_train(cfg.train, false);
  j["decision"] = to_json_decision(cfg.decision);
  j["paths"] = {{"scenarios", cfg.paths.scenarios}, {"out", cfg.paths.out}, {"checkpoint", cfg.paths.checkpoint}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  StrictObject o(j, "");
  o.get("seed", cfg.seed);
  if (const json* s = o.child("scenario")) cfg.scenario = scenario_config_parse(*s, false);
  if (const json* t = o.child("train")) cfg.train = train_from_json(*t, false);
  if (const json* d = o.child("decision")) cfg.decision = decision_from_json(*d);
  if (const json* p = o.child("paths")) {
    StrictObject po(*p, "paths");
    po.get("scenarios", cfg.paths.scenarios);
    po.get("out", cfg.paths.out);
    po.get("checkpoint", cfg.paths.checkpoint);
    po.finish();
  }
  o.finish();
  cfg.apply_seed();
  validate(cfg.scenario);
  validate(cfg.train);
  validate(cfg.decision);
  if (cfg.train.window != cfg.scenario.window) throw ConfigError("train.window must equal scenario.window");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

// ------------------------------------------------------------- raw arrays

void write_f32(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<float> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(&out[i], &bits, sizeof bits);
  }
  return out;
}

// ------------------------------------------------------------- scenarios

namespace {

template <typename T>
std::vector<T> to_vec(const Vector& v) {
  return std::vector<T>(v.data(), v.data() + v.size());
}

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<float> flatten(const std::vector<Matrix>& frames) {
  std::vector<float> out;
  for (const auto& f : frames) {
    for (Index i = 0; i < f.size(); ++i) out.push_back(static_cast<float>(f.data()[i]));
  }
  return out;
}

std::vector<Matrix> unflatten(const std::vector<float>& v, Index t, Index n, Index d, const std::string& what) {
  if (static_cast<Index>(v.size()) != t * n * d) throw std::runtime_error(what + ": unexpected element count");
  std::vector<Matrix> frames;
  for (Index k = 0; k < t; ++k) {
    Matrix m(n, d);
    for (Index i = 0; i < n * d; ++i) m.data()[i] = static_cast<double>(v[static_cast<std::size_t>(k * n * d + i)]);
    frames.push_back(std::move(m));
  }
  return frames;
}

}  // namespace

void save_scenario(const Scenario& s, const fs::path& dir) {
  fs::create_directories(dir);
  const Index T = s.window(), N = s.n_cells();
  ordered_json meta;
  meta["version"] = kScenarioVersion;
  meta["seed"] = s.config.seed;
  meta["config"] = to_json(s.config);
  meta["shapes"] = {{"T", T}, {"N", N}, {"feature_dim", kFeatureDim}, {"insitu_dim", kInsituDim}};
  meta["layout"] = "float32 little-endian, row-major: depths[T][N], features[T][N][feature_dim], insitu[T][N][insitu_dim]";
  meta["mass_balance_rel_err"] = s.mass_balance_rel_err;
  ordered_json terrain;
  terrain["rows"] = s.terrain.rows;
  terrain["cols"] = s.terrain.cols;
  terrain["elevation"] = to_vec<double>(s.terrain.elevation);
  terrain["roughness"] = to_vec<double>(s.terrain.roughness);
  terrain["channel_mask"] = s.terrain.channel_mask;
  terrain["channel_path"] = s.terrain.channel_path;
  meta["terrain"] = terrain;
  ordered_json evac;
  evac["origin"] = s.evac.origin;
  evac["routes"] = s.evac.routes;
  evac["route_lengths"] = s.evac.route_lengths;
  evac["shelter_of_route"] = s.evac.shelter_of_route;
  evac["shelter_cells"] = s.evac.shelter_cells;
  evac["shelter_caps"] = s.evac.shelter_caps;
  evac["demand"] = s.evac.demand;
  evac["segment_length"] = s.evac.segment_length;
  meta["evac"] = evac;
  ordered_json match;
  match["aircraft_cells"] = s.match.aircraft_cells;
  match["hangar_cells"] = s.match.hangar_cells;
  match["hangar_caps"] = s.match.hangar_caps;
  meta["match"] = match;
  meta["fixed_sensor_cells"] = s.fixed_sensor_cells;

  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  std::vector<float> depths(static_cast<std::size_t>(T * N));
  for (Index i = 0; i < T * N; ++i) depths[static_cast<std::size_t>(i)] = static_cast<float>(s.depths.data()[i]);
  write_f32(dir / "depths.f32", depths);
  write_f32(dir / "features.f32", flatten(s.features));
  write_f32(dir / "insitu.f32", flatten(s.insitu));
}

Scenario load_scenario(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw std::runtime_error("no meta.json in " + dir.string());
  json meta;
  try {
    meta = json::parse(in);
    if (meta.at("version").get<std::string>() != kScenarioVersion) {
      throw std::runtime_error("unsupported scenario version in " + dir.string());
    }
    Scenario s;
    s.config = scenario_config_from_json(meta.at("config"));
    const Index T = meta.at("shapes").at("T").get<Index>();
    const Index N = meta.at("shapes").at("N").get<Index>();
    if (meta.at("shapes").at("feature_dim").get<Index>() != kFeatureDim ||
        meta.at("shapes").at("insitu_dim").get<Index>() != kInsituDim) {
      throw std::runtime_error("channel counts in " + dir.string() + " do not match this build");
    }
    s.mass_balance_rel_err = meta.at("mass_balance_rel_err").get<double>();
    const json& t = meta.at("terrain");
    s.terrain.rows = t.at("rows").get<Index>();
    s.terrain.cols = t.at("cols").get<Index>();
    s.terrain.elevation = from_vec(t.at("elevation").get<std::vector<double>>());
    s.terrain.roughness = from_vec(t.at("roughness").get<std::vector<double>>());
    s.terrain.channel_mask = t.at("channel_mask").get<std::vector<std::uint8_t>>();
    s.terrain.channel_path = t.at("channel_path").get<std::vector<Index>>();
    const json& e = meta.at("evac");
    s.evac.origin = e.at("origin").get<Index>();
    s.evac.routes = e.at("routes").get<std::vector<std::vector<Index>>>();
    s.evac.route_lengths = e.at("route_lengths").get<std::vector<double>>();
    s.evac.shelter_of_route = e.at("shelter_of_route").get<std::vector<Index>>();
    s.evac.shelter_cells = e.at("shelter_cells").get<std::vector<Index>>();
    s.evac.shelter_caps = e.at("shelter_caps").get<std::vector<long>>();
    s.evac.demand = e.at("demand").get<long>();
    s.evac.segment_length = e.at("segment_length").get<double>();
    const json& m = meta.at("match");
    s.match.aircraft_cells = m.at("aircraft_cells").get<std::vector<Index>>();
    s.match.hangar_cells = m.at("hangar_cells").get<std::vector<Index>>();
    s.match.hangar_caps = m.at("hangar_caps").get<std::vector<double>>();
    s.fixed_sensor_cells = meta.at("fixed_sensor_cells").get<std::vector<Index>>();

    const std::vector<float> depths = read_f32(dir / "depths.f32");
    if (static_cast<Index>(depths.size()) != T * N) throw std::runtime_error("depths.f32: unexpected element count");
    s.depths.resize(T, N);
    for (Index i = 0; i < T * N; ++i) s.depths.data()[i] = static_cast<double>(depths[static_cast<std::size_t>(i)]);
    s.features = unflatten(read_f32(dir / "features.f32"), T, N, kFeatureDim, "features.f32");
    s.insitu = unflatten(read_f32(dir / "insitu.f32"), T, N, kInsituDim, "insitu.f32");
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed meta.json in " + dir.string() + ": " + e.what());
  }
}

void save_suite(const std::vector<Scenario>& suite, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    std::ostringstream name;
    name << "scenario_" << std::setw(4) << std::setfill('0') << i;
    save_scenario(suite[i], dir / name.str());
  }
}

std::vector<Scenario> load_suite(const fs::path& dir) {
  if (fs::exists(dir / "meta.json")) return {load_scenario(dir)};
  if (!fs::is_directory(dir)) throw std::runtime_error("scenario directory " + dir.string() + " does not exist");
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  if (subdirs.empty()) throw std::runtime_error("no scenarios found in " + dir.string());
  std::vector<Scenario> out;
  for (const auto& d : subdirs) out.push_back(load_scenario(d));
  return out;
}

// ----------------------------------------------------------- checkpoints

void save_checkpoint(const ModelParams& p, const TrainConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json meta;
  meta["version"] = kCheckpointVersion;
  meta["train"] = to_json_train(cfg, true);
  ordered_json tensors = ordered_json::array();
  std::vector<float> flat;
  for (const auto& t : p.tensors()) {
    tensors.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()},
                       {"offset", flat.size()}});
    for (Index i = 0; i < t.value->size(); ++i) flat.push_back(static_cast<float>(t.value->data()[i]));
  }
  meta["tensors"] = tensors;
  meta["total"] = flat.size();
  {
    std::ofstream out(dir / "params.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "params.json").string());
    out << meta.dump(2) << '\n';
  }
  write_f32(dir / "params.f32", flat);
}

namespace {

json read_checkpoint_meta(const fs::path& dir) {
  std::ifstream in(dir / "params.json");
  if (!in) throw std::runtime_error("no params.json in " + dir.string());
  json meta = json::parse(in);
  if (meta.at("version").get<std::string>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + dir.string());
  }
  return meta;
}

}  // namespace

TrainConfig checkpoint_config(const fs::path& dir) {
  try {
    return train_from_json(read_checkpoint_meta(dir).at("train"), true);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed params.json in " + dir.string() + ": " + e.what());
  }
}

void load_checkpoint(ModelParams& p, const fs::path& dir) {
  try {
    const json meta = read_checkpoint_meta(dir);
    const std::vector<float> flat = read_f32(dir / "params.f32");
    if (flat.size() != meta.at("total").get<std::size_t>()) throw std::runtime_error("params.f32: unexpected size");
    auto tensors = p.tensors();
    const json& entries = meta.at("tensors");
    if (entries.size() != tensors.size()) throw std::runtime_error("checkpoint tensor count does not match model");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const json& e = entries[i];
      Matrix& m = *tensors[i].value;
      if (e.at("name").get<std::string>() != tensors[i].name || e.at("rows").get<Index>() != m.rows() ||
          e.at("cols").get<Index>() != m.cols()) {
        throw std::runtime_error("checkpoint tensor " + e.at("name").get<std::string>() + " does not match model");
      }
      const auto offset = e.at("offset").get<std::size_t>();
      for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<double>(flat[offset + static_cast<std::size_t>(k)]);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed params.json in " + dir.string() + ": " + e.what());
  }
}

void write_epoch_log_csv(std::ostream& os, const std::vector<EpochLog>& log, const std::string& variant) {
  if (variant.empty()) os << "phase,epoch,train_loss,val_loss\n";
  else os << "variant,phase,epoch,train_loss,val_loss\n";
  for (const auto& e : log) {
    if (!variant.empty()) os << variant << ',';
    os << e.phase << ',' << e.epoch << ',' << format_sig6(e.train_loss) << ',' << format_sig6(e.val_loss) << '\n';
  }
}

}  // namespace dfsense
