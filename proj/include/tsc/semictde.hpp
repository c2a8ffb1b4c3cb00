#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsc/policies.hpp"
#include "tsc/qlearn.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// State layout and encoders
// ---------------------------------------------------------------------------

struct StateLayout {
  struct Block {
    std::string name;
    int offset = 0;
    int width = 0;
  };
  std::vector<Block> blocks;
  int width = 0;
  std::string descriptor() const;  // canonical JSON
};

/// Layout for a learned model: the 17 local dims first plus the model's
/// regional block, except OneHop whose neighbor-centric 74-dim encoding is
/// the whole input. Widths: 17 / 17 / 31 / 74.
StateLayout make_layout(ModelKind kind);
int state_width(ModelKind kind);

/// Full state encoding for one intersection at its decision instant.
std::vector<double> tle_encode(ModelKind kind, const SimCore& sim,
                               const RegionPartition& part,
                               const RewardWeights& w, int node,
                               int phase_action_or_minus1,
                               std::vector<RegionObsState>& region_state);

/// Masked copy: inadmissible entries replaced by -infinity.
std::vector<double> amm_mask(const std::vector<double>& q,
                             const std::array<bool, kActionCount>& admissible);

// ---------------------------------------------------------------------------
// Regional agents
// ---------------------------------------------------------------------------

struct RegionalAgent {
  int region = -1;
  Mlp online, target;
  AdamState adam;
  std::unique_ptr<ReplayMemory> memory;
  long pending_since_train = 0;
  long train_steps = 0;
  long steps_since_sync = 0;
  std::vector<double> losses;  // per train step, episode-scoped
};

struct AgentSet {
  ModelKind kind = ModelKind::RegionWide;
  std::vector<RegionalAgent> agents;  // indexed by region
  RegionalAgent& for_region(int r);
  const RegionalAgent& for_region(int r) const;
};

/// Fresh seeded agents, one per region of the partition.
AgentSet make_agents(ModelKind kind, const RegionPartition& part,
                     const TrainerConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Episode runner
// ---------------------------------------------------------------------------

enum class EpisodeMode { Train, Eval, Probe };

struct EpisodeSetup {
  const RoadNetwork* net = nullptr;
  const RegionPartition* part = nullptr;
  MesoParams meso;
  FlowConfig flow;
  TrainerConfig trainer;
  RewardWeights weights;
  /// Per-region lambda overrides (tuning); empty keeps `weights` for all.
  std::vector<RewardWeights> region_weights;
  bool event_log = false;
};

struct EpisodeResult {
  MetricsReport metrics;
  long transitions = 0;
  long train_steps = 0;
  double mean_loss = 0.0;
  /// Mean regional reward per closed transition, per region (probe objective).
  std::vector<double> region_reward_mean;
  std::vector<EvRecord> event_log;
  std::vector<DecisionAudit> decisions;
};

/// Drives one simulated episode under the regional agents. Train mode
/// gathers experience asynchronously (each intersection closes its previous
/// transition at its own next decision), steps the shared network every
/// c_policy closed transitions per region and hard-copies the target every
/// c_target train steps; eval/probe modes freeze parameters and memories.
/// Pending transitions close with done=true at the horizon.
EpisodeResult run_episode(const EpisodeSetup& setup, AgentSet& agents,
                          EpisodeMode mode, double eps, std::uint64_t seed);

/// Greedy decentralized execution (eps = 0) of frozen agents; throws
/// SimError if the partition references a region without an agent.
EpisodeResult decentralized_execute(const EpisodeSetup& setup,
                                    const AgentSet& agents,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoint bundles
// ---------------------------------------------------------------------------

/// Directory bundle: manifest.json (model tag, layout descriptor, partition
/// hash, config hash) plus one params file per region.
void save_checkpoint_bundle(const std::string& dir, const AgentSet& agents,
                            const RegionPartition& part,
                            const std::string& config_hash);
AgentSet load_checkpoint_bundle(const std::string& dir,
                                const RegionPartition& part);

}  // namespace tsc
