#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tsc/controllers.hpp"
#include "tsc/mesosim.hpp"
#include "tsc/regionform.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Model vocabulary
// ---------------------------------------------------------------------------

enum class ModelKind {
  Actuated,            // rule-based gap-out, no training
  FixedTime,           // rule-based round-robin, no training
  Random,              // rule-based uniform admissible, no training
  FullyDecentralized,  // per-intersection net, local state/reward
  PartiallySemiCtde,   // per-region net, local state/reward
  RegionWide,          // per-region net, local+aggregate regional features
  OneHop               // per-region net, local+neighbor-detail features
};

struct ModelDescriptor {
  ModelKind kind;
  std::string tag;
  bool learned = false;
  int d_in = 0;  // 0 for rule-based controllers
};

/// Throws ConfigError on unknown tags.
ModelDescriptor model_descriptor(const std::string& tag);
const std::vector<ModelDescriptor>& all_models();

/// Composite weights and regional coefficients.
struct RewardWeights {
  double rho_local = 0.5;
  double rho_regional = 0.5;
  double lambda_spill = 1.0;
  double lambda_switch = 1.0;
  double lambda_out = 1.0;
  double ema_beta = 0.9;       // reward-side smoothing
  double spill_threshold = 15; // per-approach halted count > threshold
};
RewardWeights default_weights(ModelKind kind);

// ---------------------------------------------------------------------------
// Local features (width 17)
// ---------------------------------------------------------------------------

constexpr int kLocalWidth = 17;

/// [phase one-hot 8 | q_vert q_hor q_vert_left q_hor_left | topology 5].
/// Queue entries are halted counts normalized by the contributing lane-group
/// vehicle capacity; the phase one-hot is all-zero in clearance or before
/// the first committed action.
std::vector<double> local_state(const LaneObservation& lane,
                                int phase_action_or_minus1,
                                TopologyKind topology);

/// Normalized queue block [q_vert, q_hor, q_vert_left, q_hor_left].
std::array<double, 4> normalized_queues(const LaneObservation& lane);

/// r_local = -(q_vert + q_hor + q_vert_left + q_hor_left).
double local_reward(const LaneObservation& lane);

// ---------------------------------------------------------------------------
// Region-wide aggregate features (regional width 14, total 31)
// ---------------------------------------------------------------------------

constexpr int kRegionWideWidth = kLocalWidth + 14;

/// Instantaneous regional aggregates, computed per decision event.
struct RegionSnapshot {
  std::array<double, 4> phase_proportions{};  // per logic, over |R|
  std::array<double, 4> mean_queues{};        // mean normalized block
  double chi = 0.0;    // fraction of region approaches spilled (> threshold)
  double sigma = 0.0;  // fraction of members in clearance
  double f = 0.0;      // boundary net exchange flow, veh/s
};

/// Mutable per-region observation state: previous boundary occupancy for f
/// and the reward-side EMAs.
struct RegionObsState {
  double last_t = -1.0;
  double last_boundary_n = 0.0;
  bool ema_init = false;
  double ema_chi = 0.0, ema_sigma = 0.0, ema_f = 0.0;
  RegionSnapshot cached;  // valid for decisions sharing one instant
};

/// Members' phase/queue aggregates plus boundary flow against the previous
/// snapshot; updates `state` (snapshot advance + EMA) unless the instant
/// matches the cached one, in which case the cache is returned.
RegionSnapshot observe_region(const SimCore& sim, const RegionPartition& part,
                              int region, const RewardWeights& w,
                              RegionObsState& state);

/// [proportions 4 | mean queue 4 | chi | f | out-of-region indicators 4].
std::vector<double> regionwide_regional_state(const RegionSnapshot& snap,
                                              const SimCore& sim,
                                              const RegionPartition& part,
                                              int node);

/// r_reg = -mean_queue_sum - l_spill*EMA(chi) - l_switch*EMA(sigma)
///         + l_out*EMA(f); the queue term is unsmoothed.
double regionwide_reward(const RegionSnapshot& snap, const RegionObsState& st,
                         const RewardWeights& w);

// ---------------------------------------------------------------------------
// One-hop features (width 74; the complete model input -- the neighbor-centric
// encoding subsumes the local block rather than repeating it)
// ---------------------------------------------------------------------------

constexpr int kOneHopSlot = 18;  // phase 8 + dt 1 + queues 4 + topology 5
constexpr int kOneHopWidth = 4 * kOneHopSlot + 2;

/// Slots in N,E,S,W order for in-region signalized direct neighbors (zeros
/// otherwise): [phase one-hot 8 | time-to-decision / (g_long + clearance) |
/// normalized queues 4 | topology 5]; then own advancing counts
/// [N_vert, N_hor] with N = present - halted (raw vehicles).
std::vector<double> onehop_regional_state(const SimCore& sim,
                                          const RegionPartition& part,
                                          int node);

/// r_reg = -sum over in-region one-hop neighbors of their local reward
/// magnitude's negative (i.e. sum of neighbor local rewards).
double onehop_reward(const SimCore& sim, const RegionPartition& part,
                     int node);

/// rho_local * r_local + rho_regional * r_regional.
double composite_reward(double r_local, double r_regional,
                        const RewardWeights& w);

/// In-region signalized direct neighbor in each direction, -1 otherwise.
std::array<int, 4> onehop_neighbors(const RoadNetwork& net,
                                    const RegionPartition& part, int node);

}  // namespace tsc
