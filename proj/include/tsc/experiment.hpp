#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsc/spsa.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Declarative experiment configuration (JSON file with fixed sections;
// unknown keys anywhere are hard errors)
// ---------------------------------------------------------------------------

struct NetworkSection {
  int rows = 5, cols = 5;
  double approach_length_m = 470.0;
  int lanes = 3;
  std::string signalized = "corners_unsignalized";  // or "all"
  std::vector<int> signalized_ids;                  // used when mode "list"
  SignalTiming timing;
};

struct FlowSection {
  std::string preset;  // one of the preset names, or empty for inline
  FlowConfig inline_flow;
  bool is_inline = false;
};

struct ModelSection {
  std::string tag = "regionwide";
  RewardWeights weights;      // resolved against the model's defaults
  ActuatedParams actuated;
};

struct TrainingSection {
  int episodes = 225;
  TrainerConfig trainer;
  std::uint64_t seed = 1;
  int eval_reps = 10;
};

struct PartitionSection {
  std::string mode = "compute";  // compute | file | singletons | whole
  double alpha = 0.35;
  double warmup_horizon_s = 3600.0;
  std::string file;
  std::vector<double> sweep_alphas;
};

struct OutputSection {
  std::string dir = "out";
  bool event_log = true;  // eval/partition runs
};

struct TuneSection {
  SpsaSchedule schedule;
  int initial_train_episodes = 100;
  int cycles = 10;
  int block_episodes = 10;
};

struct ExperimentConfig {
  NetworkSection network;
  FlowSection flow;
  ModelSection model;
  TrainingSection training;
  PartitionSection partition;
  OutputSection output;
  TuneSection tune;
  MesoParams meso;

  std::string canonical_json() const;
  std::string hash() const;
};

/// Parse + validate. Unknown keys, malformed values, and inconsistent
/// sections throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Named flow presets: U1, G1, G2, W1..W4.
const std::vector<FlowConfig>& flow_presets();
FlowConfig flow_preset(const std::string& name);
FlowConfig resolve_flow(const FlowSection& s);

// ---------------------------------------------------------------------------
// Run drivers (the CLI maps subcommands onto these)
// ---------------------------------------------------------------------------

struct BuiltExperiment {
  RoadNetwork net;
  RegionPartition part;
  FlowConfig flow;
};

/// Network + partition + flow per the config; `compute` mode runs the
/// warm-up and the alpha-cut.
BuiltExperiment build_experiment(const ExperimentConfig& cfg);

int cmd_partition(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
             const std::vector<std::string>& flows, int reps);
int cmd_tune(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);

}  // namespace tsc
