#include "tsc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <utility>

#include "json.hpp"

#include "tsc/controllers.hpp"
#include "tsc/util.hpp"

namespace tsc {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kCodeVersion = "0.1.0";

// --- strict JSON access ----------------------------------------------------

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
  }
}

double get_num(const json& s, const char* key, double cur,
               const std::string& where) {
  if (!s.contains(key)) return cur;
  const json& v = s.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

long get_int(const json& s, const char* key, long cur,
             const std::string& where) {
  if (!s.contains(key)) return cur;
  const json& v = s.at(key);
  if (!v.is_number_integer())
    throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<long>();
}

std::string get_str(const json& s, const char* key, std::string cur,
                    const std::string& where) {
  if (!s.contains(key)) return cur;
  const json& v = s.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& s, const char* key, bool cur,
              const std::string& where) {
  if (!s.contains(key)) return cur;
  const json& v = s.at(key);
  if (!v.is_boolean())
    throw ConfigError(where + "." + key + ": expected a boolean");
  return v.get<bool>();
}

void require_positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw ConfigError(what + " must be > 0");
}

// --- section parsers -------------------------------------------------------

void parse_network(const json& s, NetworkSection& n) {
  check_keys(s, "network",
             {"rows", "cols", "approach_length_m", "lanes", "signalized",
              "signalized_ids", "timing"});
  n.rows = static_cast<int>(get_int(s, "rows", n.rows, "network"));
  n.cols = static_cast<int>(get_int(s, "cols", n.cols, "network"));
  n.approach_length_m =
      get_num(s, "approach_length_m", n.approach_length_m, "network");
  n.lanes = static_cast<int>(get_int(s, "lanes", n.lanes, "network"));
  n.signalized = get_str(s, "signalized", n.signalized, "network");
  if (s.contains("signalized_ids")) {
    const json& ids = s.at("signalized_ids");
    if (!ids.is_array())
      throw ConfigError("network.signalized_ids: expected an array");
    n.signalized_ids.clear();
    for (const json& v : ids) {
      if (!v.is_number_integer())
        throw ConfigError("network.signalized_ids: expected integers");
      n.signalized_ids.push_back(v.get<int>());
    }
  }
  if (s.contains("timing")) {
    const json& t = s.at("timing");
    check_keys(t, "network.timing", {"g_short", "g_long", "clearance"});
    n.timing.g_short = get_num(t, "g_short", n.timing.g_short, "network.timing");
    n.timing.g_long = get_num(t, "g_long", n.timing.g_long, "network.timing");
    n.timing.clearance =
        get_num(t, "clearance", n.timing.clearance, "network.timing");
  }
  if (n.rows < 2 || n.cols < 2) throw ConfigError("network grid must be >= 2x2");
  require_positive(n.approach_length_m, "network.approach_length_m");
  if (n.lanes < 1) throw ConfigError("network.lanes must be >= 1");
  if (n.signalized != "corners_unsignalized" && n.signalized != "all" &&
      n.signalized != "list")
    throw ConfigError("network.signalized must be corners_unsignalized|all|list");
  if (n.signalized == "list" && n.signalized_ids.empty())
    throw ConfigError("network.signalized = list needs signalized_ids");
  require_positive(n.timing.g_short, "network.timing.g_short");
  require_positive(n.timing.g_long, "network.timing.g_long");
  if (n.timing.clearance < 0)
    throw ConfigError("network.timing.clearance must be >= 0");
}

void parse_flow(const json& s, FlowSection& f) {
  check_keys(s, "flow",
             {"preset", "name", "shape", "total_vehicles", "avg_rate",
              "horizon_s"});
  if (s.contains("preset")) {
    if (s.size() != 1)
      throw ConfigError("flow.preset excludes the inline flow keys");
    f.preset = get_str(s, "preset", f.preset, "flow");
    f.is_inline = false;
    flow_preset(f.preset);  // validates the name
    return;
  }
  f.is_inline = true;
  f.preset.clear();
  FlowConfig& fc = f.inline_flow;
  fc.name = get_str(s, "name", "custom", "flow");
  std::string shape = get_str(s, "shape", "uniform", "flow");
  fc.shape = flow_shape_from(shape);
  fc.total_vehicles = get_int(s, "total_vehicles", 0, "flow");
  fc.horizon_s = get_num(s, "horizon_s", 18000.0, "flow");
  if (fc.total_vehicles <= 0)
    throw ConfigError("flow.total_vehicles must be > 0");
  require_positive(fc.horizon_s, "flow.horizon_s");
  fc.avg_rate = get_num(s, "avg_rate",
                        static_cast<double>(fc.total_vehicles) / fc.horizon_s,
                        "flow");
}

void parse_weights(const json& s, RewardWeights& w) {
  check_keys(s, "model.weights",
             {"rho_local", "rho_regional", "lambda_spill", "lambda_switch",
              "lambda_out", "ema_beta", "spill_threshold"});
  w.rho_local = get_num(s, "rho_local", w.rho_local, "model.weights");
  w.rho_regional = get_num(s, "rho_regional", w.rho_regional, "model.weights");
  w.lambda_spill = get_num(s, "lambda_spill", w.lambda_spill, "model.weights");
  w.lambda_switch =
      get_num(s, "lambda_switch", w.lambda_switch, "model.weights");
  w.lambda_out = get_num(s, "lambda_out", w.lambda_out, "model.weights");
  w.ema_beta = get_num(s, "ema_beta", w.ema_beta, "model.weights");
  w.spill_threshold =
      get_num(s, "spill_threshold", w.spill_threshold, "model.weights");
  if (w.ema_beta < 0 || w.ema_beta >= 1)
    throw ConfigError("model.weights.ema_beta must be in [0, 1)");
  if (w.lambda_spill < 0 || w.lambda_switch < 0 || w.lambda_out < 0)
    throw ConfigError("model.weights lambda coefficients must be >= 0");
}

void parse_model(const json& s, ModelSection& m) {
  check_keys(s, "model", {"tag", "weights", "actuated"});
  m.tag = get_str(s, "tag", m.tag, "model");
  ModelDescriptor md = model_descriptor(m.tag);  // validates the tag
  m.weights = default_weights(md.kind);
  if (s.contains("weights")) parse_weights(s.at("weights"), m.weights);
  if (s.contains("actuated")) {
    const json& a = s.at("actuated");
    check_keys(a, "model.actuated",
               {"min_green_s", "max_green_s", "critical_gap_s"});
    m.actuated.min_green_s =
        get_num(a, "min_green_s", m.actuated.min_green_s, "model.actuated");
    m.actuated.max_green_s =
        get_num(a, "max_green_s", m.actuated.max_green_s, "model.actuated");
    m.actuated.critical_gap_s = get_num(a, "critical_gap_s",
                                        m.actuated.critical_gap_s,
                                        "model.actuated");
    require_positive(m.actuated.min_green_s, "model.actuated.min_green_s");
    if (m.actuated.max_green_s < m.actuated.min_green_s)
      throw ConfigError("model.actuated.max_green_s must be >= min_green_s");
    require_positive(m.actuated.critical_gap_s,
                     "model.actuated.critical_gap_s");
  }
}

void parse_trainer(const json& s, TrainerConfig& t) {
  check_keys(s, "training.trainer",
             {"eps0", "eps_decay", "eps_min", "gamma", "batch", "c_policy",
              "c_target", "memory", "adam"});
  t.eps0 = get_num(s, "eps0", t.eps0, "training.trainer");
  t.eps_decay = get_num(s, "eps_decay", t.eps_decay, "training.trainer");
  t.eps_min = get_num(s, "eps_min", t.eps_min, "training.trainer");
  t.gamma = get_num(s, "gamma", t.gamma, "training.trainer");
  t.batch = static_cast<int>(get_int(s, "batch", t.batch, "training.trainer"));
  t.c_policy =
      static_cast<int>(get_int(s, "c_policy", t.c_policy, "training.trainer"));
  t.c_target = get_int(s, "c_target", t.c_target, "training.trainer");
  t.memory = static_cast<std::size_t>(
      get_int(s, "memory", static_cast<long>(t.memory), "training.trainer"));
  if (s.contains("adam")) {
    const json& a = s.at("adam");
    check_keys(a, "training.trainer.adam", {"lr", "beta1", "beta2", "eps"});
    t.adam.lr = get_num(a, "lr", t.adam.lr, "training.trainer.adam");
    t.adam.beta1 = get_num(a, "beta1", t.adam.beta1, "training.trainer.adam");
    t.adam.beta2 = get_num(a, "beta2", t.adam.beta2, "training.trainer.adam");
    t.adam.eps = get_num(a, "eps", t.adam.eps, "training.trainer.adam");
    require_positive(t.adam.lr, "training.trainer.adam.lr");
  }
  if (t.eps0 < 0 || t.eps0 > 1)
    throw ConfigError("training.trainer.eps0 must be in [0, 1]");
  if (t.eps_decay <= 0 || t.eps_decay > 1)
    throw ConfigError("training.trainer.eps_decay must be in (0, 1]");
  if (t.eps_min < 0 || t.eps_min > t.eps0)
    throw ConfigError("training.trainer.eps_min must be in [0, eps0]");
  if (t.gamma < 0 || t.gamma >= 1)
    throw ConfigError("training.trainer.gamma must be in [0, 1)");
  if (t.batch < 1) throw ConfigError("training.trainer.batch must be >= 1");
  if (t.c_policy < 1)
    throw ConfigError("training.trainer.c_policy must be >= 1");
  if (t.c_target < 1)
    throw ConfigError("training.trainer.c_target must be >= 1");
  if (t.memory < static_cast<std::size_t>(t.batch))
    throw ConfigError("training.trainer.memory must be >= batch");
}

void parse_training(const json& s, TrainingSection& t) {
  check_keys(s, "training", {"episodes", "seed", "eval_reps", "trainer"});
  t.episodes =
      static_cast<int>(get_int(s, "episodes", t.episodes, "training"));
  t.seed = static_cast<std::uint64_t>(
      get_int(s, "seed", static_cast<long>(t.seed), "training"));
  t.eval_reps =
      static_cast<int>(get_int(s, "eval_reps", t.eval_reps, "training"));
  if (s.contains("trainer")) parse_trainer(s.at("trainer"), t.trainer);
  if (t.episodes < 1) throw ConfigError("training.episodes must be >= 1");
  if (t.eval_reps < 1) throw ConfigError("training.eval_reps must be >= 1");
}

void parse_partition(const json& s, PartitionSection& p) {
  check_keys(s, "partition",
             {"mode", "alpha", "warmup_horizon_s", "file", "sweep_alphas"});
  p.mode = get_str(s, "mode", p.mode, "partition");
  p.alpha = get_num(s, "alpha", p.alpha, "partition");
  p.warmup_horizon_s =
      get_num(s, "warmup_horizon_s", p.warmup_horizon_s, "partition");
  p.file = get_str(s, "file", p.file, "partition");
  if (s.contains("sweep_alphas")) {
    const json& a = s.at("sweep_alphas");
    if (!a.is_array())
      throw ConfigError("partition.sweep_alphas: expected an array");
    p.sweep_alphas.clear();
    for (const json& v : a) {
      if (!v.is_number())
        throw ConfigError("partition.sweep_alphas: expected numbers");
      p.sweep_alphas.push_back(v.get<double>());
    }
  }
  if (p.mode != "compute" && p.mode != "file" && p.mode != "singletons" &&
      p.mode != "whole")
    throw ConfigError("partition.mode must be compute|file|singletons|whole");
  if (p.mode == "file" && p.file.empty())
    throw ConfigError("partition.mode = file needs partition.file");
  if (p.alpha < 0) throw ConfigError("partition.alpha must be >= 0");
  require_positive(p.warmup_horizon_s, "partition.warmup_horizon_s");
  for (double a : p.sweep_alphas)
    if (a < 0) throw ConfigError("partition.sweep_alphas must be >= 0");
}

void parse_output(const json& s, OutputSection& o) {
  check_keys(s, "output", {"dir", "event_log"});
  o.dir = get_str(s, "dir", o.dir, "output");
  o.event_log = get_bool(s, "event_log", o.event_log, "output");
  if (o.dir.empty()) throw ConfigError("output.dir must not be empty");
}

void parse_tune(const json& s, TuneSection& t) {
  check_keys(s, "tune",
             {"initial_train_episodes", "cycles", "block_episodes",
              "schedule"});
  t.initial_train_episodes = static_cast<int>(get_int(
      s, "initial_train_episodes", t.initial_train_episodes, "tune"));
  t.cycles = static_cast<int>(get_int(s, "cycles", t.cycles, "tune"));
  t.block_episodes =
      static_cast<int>(get_int(s, "block_episodes", t.block_episodes, "tune"));
  if (s.contains("schedule")) {
    const json& q = s.at("schedule");
    check_keys(q, "tune.schedule", {"a", "big_a", "c", "alpha", "gamma"});
    t.schedule.a = get_num(q, "a", t.schedule.a, "tune.schedule");
    t.schedule.big_a = get_num(q, "big_a", t.schedule.big_a, "tune.schedule");
    t.schedule.c = get_num(q, "c", t.schedule.c, "tune.schedule");
    t.schedule.alpha = get_num(q, "alpha", t.schedule.alpha, "tune.schedule");
    t.schedule.gamma = get_num(q, "gamma", t.schedule.gamma, "tune.schedule");
    require_positive(t.schedule.a, "tune.schedule.a");
    require_positive(t.schedule.c, "tune.schedule.c");
    if (t.schedule.big_a < 0)
      throw ConfigError("tune.schedule.big_a must be >= 0");
  }
  if (t.initial_train_episodes < 0)
    throw ConfigError("tune.initial_train_episodes must be >= 0");
  if (t.cycles < 1) throw ConfigError("tune.cycles must be >= 1");
  if (t.block_episodes < 0)
    throw ConfigError("tune.block_episodes must be >= 0");
}

void parse_meso(const json& s, MesoParams& m) {
  check_keys(s, "meso",
             {"free_speed_mps", "saturation_headway_s", "vehicle_space_m",
              "sample_interval_s"});
  m.free_speed_mps = get_num(s, "free_speed_mps", m.free_speed_mps, "meso");
  m.saturation_headway_s =
      get_num(s, "saturation_headway_s", m.saturation_headway_s, "meso");
  m.vehicle_space_m = get_num(s, "vehicle_space_m", m.vehicle_space_m, "meso");
  m.sample_interval_s =
      get_num(s, "sample_interval_s", m.sample_interval_s, "meso");
  require_positive(m.free_speed_mps, "meso.free_speed_mps");
  require_positive(m.saturation_headway_s, "meso.saturation_headway_s");
  require_positive(m.vehicle_space_m, "meso.vehicle_space_m");
  require_positive(m.sample_interval_s, "meso.sample_interval_s");
}

// --- output helpers --------------------------------------------------------

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t stream) {
  auto g = make_rng(master, stream);
  return g();
}

constexpr std::uint64_t kStreamTrainEpisode = 0x45500000;
constexpr std::uint64_t kStreamEval = 0x0eba1000;
constexpr std::uint64_t kStreamProbe = 0x50b50000;
constexpr std::uint64_t kStreamDelta = 0x5e17a000;

std::string safe_token(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
            c == '-')
               ? c
               : '_';
  return out.empty() ? std::string("x") : out;
}

double trailing_mean(const std::vector<double>& v, std::size_t window) {
  std::size_t n = std::min(window, v.size());
  double s = 0.0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return n ? s / static_cast<double>(n) : 0.0;
}

/// Accumulated queue wait of every completed trip, replayed from the log.
std::vector<double> completed_waits(const std::vector<EvRecord>& log) {
  std::map<int, double> wait, joined;
  std::vector<double> out;
  for (const EvRecord& ev : log) {
    switch (ev.kind) {
      case EvKind::Arrive:
        if (ev.node < 0) {
          auto it = wait.find(ev.vehicle);
          out.push_back(it == wait.end() ? 0.0 : it->second);
        } else {
          joined[ev.vehicle] = ev.t;
        }
        break;
      case EvKind::Discharge:
        if (ev.vehicle >= 0) wait[ev.vehicle] += ev.t - joined[ev.vehicle];
        break;
      default:
        break;
    }
  }
  return out;
}

void write_histogram(const std::string& path, const std::vector<double>& waits,
                     double bin_width) {
  std::size_t nbins = 1;
  for (double w : waits)
    nbins = std::max(nbins,
                     static_cast<std::size_t>(std::floor(w / bin_width)) + 1);
  std::vector<long> counts(nbins, 0);
  for (double w : waits)
    counts[static_cast<std::size_t>(std::floor(w / bin_width))]++;
  CsvWriter csv({"bin_low_s", "bin_high_s", "count"});
  for (std::size_t b = 0; b < nbins; ++b)
    csv.row({fmt_csv(static_cast<double>(b) * bin_width),
             fmt_csv(static_cast<double>(b + 1) * bin_width),
             std::to_string(counts[b])});
  csv.save(path);
}

void write_series(const std::string& path, const MetricsReport& m) {
  CsvWriter csv({"t", "aql", "awt_inst"});
  for (std::size_t i = 0; i < m.sample_times.size(); ++i)
    csv.row({fmt_csv(m.sample_times[i]), fmt_csv(m.aql_series[i]),
             fmt_csv(m.awt_inst_series[i])});
  csv.save(path);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const RegionPartition& part, ordered_json extra) {
  ordered_json m;
  m["command"] = command;
  m["code_version"] = kCodeVersion;
  m["config_hash"] = cfg.hash();
  m["seed"] = cfg.training.seed;
  m["partition_hash"] = hex64(part.hash());
  m["regions"] = part.region_count();
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = *it;
  write_file(cfg.output.dir + "/manifest.json", m.dump(2) + "\n");
}

struct RuleEpisode {
  MetricsReport metrics;
  std::vector<EvRecord> event_log;
};

RuleEpisode run_rule_based(const RoadNetwork& net, const MesoParams& meso,
                           const FlowConfig& flow, ModelKind kind,
                           const ActuatedParams& actuated, std::uint64_t seed,
                           bool want_log) {
  SimCore sim(net, meso, flow.horizon_s);
  sim.set_event_log_enabled(want_log);
  std::unique_ptr<SignalController> ctl;
  switch (kind) {
    case ModelKind::Actuated:
      ctl = std::make_unique<ActuatedController>(actuated);
      break;
    case ModelKind::FixedTime:
      ctl = std::make_unique<FixedTimeController>();
      break;
    case ModelKind::Random:
      ctl = std::make_unique<RandomController>(seed);
      break;
    default:
      throw SimError("run_rule_based called with a learned model");
  }
  sim.set_controller(ctl.get());
  sim.set_demand(generate_demand(flow, net, seed));
  sim.run();
  RuleEpisode r;
  r.metrics = sim.metrics();
  r.event_log = sim.event_log();
  return r;
}

GridSpec grid_spec_of(const NetworkSection& n) {
  GridSpec gs;
  gs.rows = n.rows;
  gs.cols = n.cols;
  gs.approach_length_m = n.approach_length_m;
  gs.lanes = n.lanes;
  gs.timing = n.timing;
  if (n.signalized == "corners_unsignalized") {
    gs.signalized = corners_unsignalized(n.rows, n.cols);
  } else if (n.signalized == "list") {
    gs.signalized.assign(static_cast<std::size_t>(n.rows) * n.cols, 0);
    for (int id : n.signalized_ids) {
      if (id < 0 || id >= n.rows * n.cols)
        throw ConfigError("network.signalized_ids: id out of range");
      gs.signalized[static_cast<std::size_t>(id)] = 1;
    }
  }  // "all": empty flags
  return gs;
}

}  // namespace

// --- presets ---------------------------------------------------------------

const std::vector<FlowConfig>& flow_presets() {
  static const std::vector<FlowConfig> k = {
      {"U1", FlowShape::Uniform, 39600, 2.2, 18000.0},
      {"G1", FlowShape::Gaussian, 10800, 0.60, 18000.0},
      {"G2", FlowShape::Gaussian, 13500, 0.75, 18000.0},
      {"W1", FlowShape::Weibull, 14400, 0.60, 18000.0},
      {"W2", FlowShape::Weibull, 10800, 0.70, 18000.0},
      {"W3", FlowShape::Weibull, 18000, 1.0, 18000.0},
      {"W4", FlowShape::Weibull, 19800, 1.1, 18000.0},
  };
  return k;
}

FlowConfig flow_preset(const std::string& name) {
  for (const FlowConfig& f : flow_presets())
    if (f.name == name) return f;
  throw ConfigError("unknown flow preset: " + name);
}

FlowConfig resolve_flow(const FlowSection& s) {
  if (s.is_inline) return s.inline_flow;
  return flow_preset(s.preset.empty() ? "U1" : s.preset);
}

// --- config ----------------------------------------------------------------

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  check_keys(j, "config",
             {"network", "flow", "model", "training", "partition", "output",
              "tune", "meso"});
  ExperimentConfig cfg;
  cfg.flow.preset = "U1";
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  else cfg.model.weights = default_weights(model_descriptor(cfg.model.tag).kind);
  if (j.contains("network")) parse_network(j.at("network"), cfg.network);
  if (j.contains("flow")) parse_flow(j.at("flow"), cfg.flow);
  if (j.contains("training")) parse_training(j.at("training"), cfg.training);
  if (j.contains("partition")) parse_partition(j.at("partition"), cfg.partition);
  if (j.contains("output")) parse_output(j.at("output"), cfg.output);
  if (j.contains("tune")) parse_tune(j.at("tune"), cfg.tune);
  if (j.contains("meso")) parse_meso(j.at("meso"), cfg.meso);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

std::string ExperimentConfig::canonical_json() const {
  ordered_json j;
  j["network"] = {{"rows", network.rows},
                  {"cols", network.cols},
                  {"approach_length_m", network.approach_length_m},
                  {"lanes", network.lanes},
                  {"signalized", network.signalized},
                  {"signalized_ids", network.signalized_ids},
                  {"timing",
                   {{"g_short", network.timing.g_short},
                    {"g_long", network.timing.g_long},
                    {"clearance", network.timing.clearance}}}};
  if (flow.is_inline) {
    j["flow"] = {{"name", flow.inline_flow.name},
                 {"shape", to_string(flow.inline_flow.shape)},
                 {"total_vehicles", flow.inline_flow.total_vehicles},
                 {"avg_rate", flow.inline_flow.avg_rate},
                 {"horizon_s", flow.inline_flow.horizon_s}};
  } else {
    j["flow"] = {{"preset", flow.preset.empty() ? "U1" : flow.preset}};
  }
  j["model"] = {{"tag", model.tag},
                {"weights",
                 {{"rho_local", model.weights.rho_local},
                  {"rho_regional", model.weights.rho_regional},
                  {"lambda_spill", model.weights.lambda_spill},
                  {"lambda_switch", model.weights.lambda_switch},
                  {"lambda_out", model.weights.lambda_out},
                  {"ema_beta", model.weights.ema_beta},
                  {"spill_threshold", model.weights.spill_threshold}}},
                {"actuated",
                 {{"min_green_s", model.actuated.min_green_s},
                  {"max_green_s", model.actuated.max_green_s},
                  {"critical_gap_s", model.actuated.critical_gap_s}}}};
  j["training"] = {{"episodes", training.episodes},
                   {"seed", training.seed},
                   {"eval_reps", training.eval_reps},
                   {"trainer",
                    {{"eps0", training.trainer.eps0},
                     {"eps_decay", training.trainer.eps_decay},
                     {"eps_min", training.trainer.eps_min},
                     {"gamma", training.trainer.gamma},
                     {"batch", training.trainer.batch},
                     {"c_policy", training.trainer.c_policy},
                     {"c_target", training.trainer.c_target},
                     {"memory", training.trainer.memory},
                     {"adam",
                      {{"lr", training.trainer.adam.lr},
                       {"beta1", training.trainer.adam.beta1},
                       {"beta2", training.trainer.adam.beta2},
                       {"eps", training.trainer.adam.eps}}}}}};
  j["partition"] = {{"mode", partition.mode},
                    {"alpha", partition.alpha},
                    {"warmup_horizon_s", partition.warmup_horizon_s},
                    {"file", partition.file},
                    {"sweep_alphas", partition.sweep_alphas}};
  // the output section says where to write, not what to compute, so it is
  // deliberately absent from the canonical form and the hash
  j["tune"] = {{"initial_train_episodes", tune.initial_train_episodes},
               {"cycles", tune.cycles},
               {"block_episodes", tune.block_episodes},
               {"schedule",
                {{"a", tune.schedule.a},
                 {"big_a", tune.schedule.big_a},
                 {"c", tune.schedule.c},
                 {"alpha", tune.schedule.alpha},
                 {"gamma", tune.schedule.gamma}}}};
  j["meso"] = {{"free_speed_mps", meso.free_speed_mps},
               {"saturation_headway_s", meso.saturation_headway_s},
               {"vehicle_space_m", meso.vehicle_space_m},
               {"sample_interval_s", meso.sample_interval_s}};
  return j.dump(2) + "\n";
}

std::string ExperimentConfig::hash() const {
  return hex64(fnv1a64(canonical_json()));
}

// --- experiment assembly ---------------------------------------------------

BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  BuiltExperiment be{build_grid_network(grid_spec_of(cfg.network)), {}, {}};
  be.flow = resolve_flow(cfg.flow);
  const PartitionSection& p = cfg.partition;
  if (p.mode == "compute") {
    std::vector<double> q = collect_warmup_congestion(
        be.net, be.flow, p.warmup_horizon_s, cfg.meso, cfg.training.seed);
    be.part = alpha_cut_partition(build_fuzzy_graph(q, be.net), p.alpha, be.net);
  } else if (p.mode == "file") {
    be.part = partition_from_json(read_file(p.file), be.net);
  } else if (p.mode == "singletons") {
    be.part = singleton_partition(be.net);
  } else {
    be.part = whole_partition(be.net);
  }
  return be;
}

// --- commands --------------------------------------------------------------

int cmd_partition(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output.dir);
  RoadNetwork net = build_grid_network(grid_spec_of(cfg.network));
  FlowConfig flow = resolve_flow(cfg.flow);
  RegionPartition part;
  const PartitionSection& p = cfg.partition;
  if (p.mode == "compute") {
    std::vector<double> q = collect_warmup_congestion(
        net, flow, p.warmup_horizon_s, cfg.meso, cfg.training.seed);
    CongestionGraph g = build_fuzzy_graph(q, net);
    part = alpha_cut_partition(g, p.alpha, net);
    CsvWriter cong({"node", "mean_queue", "sigma"});
    for (std::size_t i = 0; i < g.vertices.size(); ++i)
      cong.row({std::to_string(g.vertices[i]), fmt_csv(q[g.vertices[i]]),
                fmt_csv(g.sigma[i])});
    cong.save(cfg.output.dir + "/congestion.csv");
    CsvWriter edges({"u", "v", "weight", "p", "membership"});
    for (const CongestionGraph::Edge& e : g.edges)
      edges.row({std::to_string(e.u), std::to_string(e.v), fmt_csv(e.weight),
                 fmt_csv(e.p), fmt_csv(e.membership)});
    edges.save(cfg.output.dir + "/memberships.csv");
  } else if (p.mode == "file") {
    part = partition_from_json(read_file(p.file), net);
  } else if (p.mode == "singletons") {
    part = singleton_partition(net);
  } else {
    part = whole_partition(net);
  }
  write_file(cfg.output.dir + "/partition.json", part.to_json());
  write_manifest(cfg, "partition", part,
                 {{"alpha", p.alpha}, {"mode", p.mode}});
  std::printf("partition: %d regions over %d signalized nodes (hash %s)\n",
              part.region_count(),
              static_cast<int>(net.signalized_ids().size()),
              hex64(part.hash()).c_str());
  std::printf("wrote %s/partition.json\n", cfg.output.dir.c_str());
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  ModelDescriptor md = model_descriptor(cfg.model.tag);
  if (!md.learned)
    throw ConfigError("model \"" + md.tag + "\" has no trainable parameters");
  auto t0 = std::chrono::steady_clock::now();
  BuiltExperiment be = build_experiment(cfg);
  fs::create_directories(cfg.output.dir);
  AgentSet agents =
      make_agents(md.kind, be.part, cfg.training.trainer, cfg.training.seed);

  EpisodeSetup setup;
  setup.net = &be.net;
  setup.part = &be.part;
  setup.meso = cfg.meso;
  setup.flow = be.flow;
  setup.trainer = cfg.training.trainer;
  setup.weights = cfg.model.weights;

  CsvWriter curve({"episode", "epsilon", "awt", "att", "aql", "completed",
                   "entered", "transitions", "train_steps", "mean_loss",
                   "awt_ma10", "att_ma10", "aql_ma10"});
  CsvWriter loss({"episode", "region", "step", "loss"});
  std::vector<double> awts, atts, aqls;
  for (int e = 0; e < cfg.training.episodes; ++e) {
    double eps = epsilon_at(e, cfg.training.trainer.eps0,
                            cfg.training.trainer.eps_decay,
                            cfg.training.trainer.eps_min);
    std::uint64_t eseed =
        derived_seed(cfg.training.seed, kStreamTrainEpisode + e);
    EpisodeResult r =
        run_episode(setup, agents, EpisodeMode::Train, eps, eseed);
    awts.push_back(r.metrics.awt);
    atts.push_back(r.metrics.att);
    aqls.push_back(r.metrics.aql);
    curve.row({std::to_string(e), fmt_csv(eps), fmt_csv(r.metrics.awt),
               fmt_csv(r.metrics.att), fmt_csv(r.metrics.aql),
               std::to_string(r.metrics.completed),
               std::to_string(r.metrics.entered),
               std::to_string(r.transitions), std::to_string(r.train_steps),
               fmt_csv(r.mean_loss), fmt_csv(trailing_mean(awts, 10)),
               fmt_csv(trailing_mean(atts, 10)),
               fmt_csv(trailing_mean(aqls, 10))});
    for (const RegionalAgent& ag : agents.agents)
      for (std::size_t i = 0; i < ag.losses.size(); ++i)
        loss.row({std::to_string(e), std::to_string(ag.region),
                  std::to_string(i), fmt_csv(ag.losses[i])});
    std::printf("episode %d/%d eps=%.3f awt=%.1f att=%.1f aql=%.2f loss=%.4g\n",
                e + 1, cfg.training.episodes, eps, r.metrics.awt,
                r.metrics.att, r.metrics.aql, r.mean_loss);
    std::fflush(stdout);
  }
  curve.save(cfg.output.dir + "/train_curve.csv");
  loss.save(cfg.output.dir + "/loss_curve.csv");
  save_checkpoint_bundle(cfg.output.dir + "/checkpoint", agents, be.part,
                         cfg.hash());
  write_manifest(cfg, "train", be.part,
                 {{"episodes", cfg.training.episodes},
                  {"checkpoint", "checkpoint"},
                  {"final_awt_ma10", trailing_mean(awts, 10)},
                  {"final_att_ma10", trailing_mean(atts, 10)}});
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  write_file(cfg.output.dir + "/timing.txt",
             "train wall-clock seconds: " + std::to_string(secs) + "\n");
  std::printf("trained %d episodes; checkpoint at %s/checkpoint\n",
              cfg.training.episodes, cfg.output.dir.c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
             const std::vector<std::string>& flows, int reps) {
  ModelDescriptor md = model_descriptor(cfg.model.tag);
  if (reps < 1) throw ConfigError("eval repetitions must be >= 1");
  BuiltExperiment be = build_experiment(cfg);
  fs::create_directories(cfg.output.dir);

  std::vector<FlowConfig> fls;
  if (flows.empty()) fls.push_back(be.flow);
  for (const std::string& name : flows) fls.push_back(flow_preset(name));

  AgentSet agents;
  if (md.learned) {
    if (checkpoint_dir.empty())
      throw ConfigError("eval of model \"" + md.tag +
                        "\" needs a checkpoint directory");
    agents = load_checkpoint_bundle(checkpoint_dir, be.part);
    if (agents.kind != md.kind)
      throw ConfigError("checkpoint was trained for a different model tag");
  }

  EpisodeSetup setup;
  setup.net = &be.net;
  setup.part = &be.part;
  setup.meso = cfg.meso;
  setup.trainer = cfg.training.trainer;
  setup.weights = cfg.model.weights;
  setup.event_log = true;

  CsvWriter summary({"flow", "model", "reps", "awt_mean", "awt_std",
                     "att_mean", "att_std", "aql_mean", "aql_std",
                     "completed_mean"});
  for (std::size_t fi = 0; fi < fls.size(); ++fi) {
    const FlowConfig& fl = fls[fi];
    std::vector<double> awt, att, aql, compl_;
    for (int rep = 0; rep < reps; ++rep) {
      std::uint64_t seed = derived_seed(
          cfg.training.seed, kStreamEval + 1000 * fi + static_cast<std::uint64_t>(rep));
      MetricsReport m;
      std::vector<EvRecord> log;
      if (md.learned) {
        setup.flow = fl;
        EpisodeResult r = decentralized_execute(setup, agents, seed);
        m = r.metrics;
        log = std::move(r.event_log);
      } else {
        RuleEpisode r = run_rule_based(be.net, cfg.meso, fl, md.kind,
                                       cfg.model.actuated, seed, true);
        m = r.metrics;
        log = std::move(r.event_log);
      }
      awt.push_back(m.awt);
      att.push_back(m.att);
      aql.push_back(m.aql);
      compl_.push_back(static_cast<double>(m.completed));
      if (rep == 0) {
        std::string tok = safe_token(fl.name);
        write_series(cfg.output.dir + "/eval_series_" + tok + ".csv", m);
        write_histogram(cfg.output.dir + "/eval_hist_" + tok + ".csv",
                        completed_waits(log), 30.0);
        if (cfg.output.event_log)
          write_file(cfg.output.dir + "/events_" + tok + ".csv",
                     event_log_to_csv(log));
      }
    }
    summary.row({fl.name, md.tag, std::to_string(reps), fmt_csv(mean_of(awt)),
                 fmt_csv(stddev_of(awt)), fmt_csv(mean_of(att)),
                 fmt_csv(stddev_of(att)), fmt_csv(mean_of(aql)),
                 fmt_csv(stddev_of(aql)), fmt_csv(mean_of(compl_))});
    std::printf("%s x %s: awt %.1f +- %.1f, att %.1f +- %.1f, aql %.2f\n",
                fl.name.c_str(), md.tag.c_str(), mean_of(awt), stddev_of(awt),
                mean_of(att), stddev_of(att), mean_of(aql));
  }
  summary.save(cfg.output.dir + "/eval_summary.csv");
  // identify the checkpoint by its contents, not by where it happened to live
  std::string ck_id;
  if (md.learned) {
    std::string bytes;
    for (const RegionalAgent& ag : agents.agents) {
      bytes += params_to_bytes(ag.online);
      bytes += params_to_bytes(ag.target);
    }
    ck_id = hex64(fnv1a64(bytes));
  }
  write_manifest(cfg, "eval", be.part,
                 {{"reps", reps}, {"model", md.tag}, {"checkpoint", ck_id}});
  return 0;
}

int cmd_tune(const ExperimentConfig& cfg) {
  ModelDescriptor md = model_descriptor(cfg.model.tag);
  if (md.kind != ModelKind::RegionWide)
    throw ConfigError(
        "tune requires the regionwide model; no lambda coefficients exist "
        "for \"" + md.tag + "\"");
  BuiltExperiment be = build_experiment(cfg);
  fs::create_directories(cfg.output.dir);
  AgentSet agents =
      make_agents(md.kind, be.part, cfg.training.trainer, cfg.training.seed);

  EpisodeSetup setup;
  setup.net = &be.net;
  setup.part = &be.part;
  setup.meso = cfg.meso;
  setup.flow = be.flow;
  setup.trainer = cfg.training.trainer;
  setup.weights = cfg.model.weights;

  int nregions = be.part.region_count();
  std::vector<Lambda> lambdas(
      static_cast<std::size_t>(nregions),
      Lambda{cfg.model.weights.lambda_spill, cfg.model.weights.lambda_switch,
             cfg.model.weights.lambda_out});
  auto apply_lambdas = [&] {
    setup.region_weights.assign(static_cast<std::size_t>(nregions),
                                setup.weights);
    for (int r = 0; r < nregions; ++r) {
      setup.region_weights[r].lambda_spill = lambdas[r][0];
      setup.region_weights[r].lambda_switch = lambdas[r][1];
      setup.region_weights[r].lambda_out = lambdas[r][2];
    }
  };
  apply_lambdas();

  long episode = 0;
  auto train_block = [&](int n) {
    for (int i = 0; i < n; ++i, ++episode) {
      double eps = epsilon_at(episode, cfg.training.trainer.eps0,
                              cfg.training.trainer.eps_decay,
                              cfg.training.trainer.eps_min);
      std::uint64_t eseed = derived_seed(
          cfg.training.seed, kStreamTrainEpisode + static_cast<std::uint64_t>(episode));
      run_episode(setup, agents, EpisodeMode::Train, eps, eseed);
    }
  };

  train_block(cfg.tune.initial_train_episodes);

  CsvWriter hist({"iteration", "region", "lambda_spill", "lambda_switch",
                  "lambda_out", "j_plus", "j_minus"});
  for (int k = 1; k <= cfg.tune.cycles; ++k) {
    train_block(cfg.tune.block_episodes);
    double a_k = spsa_a(cfg.tune.schedule, k);
    double c_k = spsa_c(cfg.tune.schedule, k);
    double eps = epsilon_at(episode, cfg.training.trainer.eps0,
                            cfg.training.trainer.eps_decay,
                            cfg.training.trainer.eps_min);
    std::uint64_t probe_seed = derived_seed(
        cfg.training.seed, kStreamProbe + static_cast<std::uint64_t>(k));
    std::uint64_t delta_seed = derived_seed(
        cfg.training.seed, kStreamDelta + static_cast<std::uint64_t>(k));
    ProbeResult pr =
        spsa_probe(setup, agents, lambdas, c_k, eps, probe_seed, delta_seed);
    for (int r = 0; r < nregions; ++r) {
      lambdas[r] = spsa_update(lambdas[r], pr.grad_hat[r], a_k);
      hist.row({std::to_string(k), std::to_string(r), fmt_csv(lambdas[r][0]),
                fmt_csv(lambdas[r][1]), fmt_csv(lambdas[r][2]),
                fmt_csv(pr.j_plus[r]), fmt_csv(pr.j_minus[r])});
    }
    apply_lambdas();
    std::printf("tune cycle %d/%d: a_k=%.4g c_k=%.4g\n", k, cfg.tune.cycles,
                a_k, c_k);
    std::fflush(stdout);
  }
  hist.save(cfg.output.dir + "/lambda_history.csv");
  CsvWriter fin({"region", "lambda_spill", "lambda_switch", "lambda_out"});
  for (int r = 0; r < nregions; ++r)
    fin.row({std::to_string(r), fmt_csv(lambdas[r][0]), fmt_csv(lambdas[r][1]),
             fmt_csv(lambdas[r][2])});
  fin.save(cfg.output.dir + "/lambda_final.csv");
  save_checkpoint_bundle(cfg.output.dir + "/checkpoint", agents, be.part,
                         cfg.hash());
  write_manifest(cfg, "tune", be.part,
                 {{"cycles", cfg.tune.cycles},
                  {"initial_train_episodes", cfg.tune.initial_train_episodes},
                  {"block_episodes", cfg.tune.block_episodes},
                  {"checkpoint", "checkpoint"}});
  std::printf("tuned %d cycles; lambda history at %s/lambda_history.csv\n",
              cfg.tune.cycles, cfg.output.dir.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  if (cfg.partition.sweep_alphas.empty())
    throw ConfigError("sweep needs partition.sweep_alphas");
  fs::create_directories(cfg.output.dir);
  RoadNetwork net = build_grid_network(grid_spec_of(cfg.network));
  FlowConfig flow = resolve_flow(cfg.flow);
  std::vector<double> q = collect_warmup_congestion(
      net, flow, cfg.partition.warmup_horizon_s, cfg.meso, cfg.training.seed);
  CongestionGraph g = build_fuzzy_graph(q, net);
  CsvWriter csv({"alpha", "region_count", "largest_region",
                 "mean_region_size", "singletons"});
  RegionPartition last;
  for (double alpha : cfg.partition.sweep_alphas) {
    RegionPartition part = alpha_cut_partition(g, alpha, net);
    std::size_t largest = 0;
    int singletons = 0;
    for (const std::vector<int>& r : part.regions) {
      largest = std::max(largest, r.size());
      if (r.size() == 1) ++singletons;
    }
    double mean_size =
        part.regions.empty()
            ? 0.0
            : static_cast<double>(net.signalized_ids().size()) /
                  static_cast<double>(part.region_count());
    csv.row({fmt_csv(alpha), std::to_string(part.region_count()),
             std::to_string(largest), fmt_csv(mean_size),
             std::to_string(singletons)});
    std::printf("alpha %.4g -> %d regions (largest %zu)\n", alpha,
                part.region_count(), largest);
    last = part;
  }
  csv.save(cfg.output.dir + "/alpha_sweep.csv");
  write_manifest(cfg, "sweep", last,
                 {{"alphas", cfg.partition.sweep_alphas}});
  return 0;
}

}  // namespace tsc
