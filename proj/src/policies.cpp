#include "tsc/policies.hpp"

#include <algorithm>
#include <cmath>

#include "tsc/util.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Model vocabulary
// ---------------------------------------------------------------------------

const std::vector<ModelDescriptor>& all_models() {
  static const std::vector<ModelDescriptor> kModels = {
      {ModelKind::Actuated, "actuated", false, 0},
      {ModelKind::FixedTime, "fixed_time", false, 0},
      {ModelKind::Random, "random", false, 0},
      {ModelKind::FullyDecentralized, "fully_decentralized", true, kLocalWidth},
      {ModelKind::PartiallySemiCtde, "partially_semictde", true, kLocalWidth},
      {ModelKind::RegionWide, "regionwide", true, kRegionWideWidth},
      {ModelKind::OneHop, "onehop", true, kOneHopWidth},
  };
  return kModels;
}

ModelDescriptor model_descriptor(const std::string& tag) {
  for (const auto& m : all_models())
    if (m.tag == tag) return m;
  throw ConfigError("unknown model: " + tag);
}

RewardWeights default_weights(ModelKind kind) {
  RewardWeights w;
  switch (kind) {
    case ModelKind::RegionWide:
      w.rho_local = 0.5;
      w.rho_regional = 0.5;
      break;
    case ModelKind::OneHop:
      w.rho_local = 0.7;
      w.rho_regional = 0.3;
      break;
    default:  // purely local reward
      w.rho_local = 1.0;
      w.rho_regional = 0.0;
      break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Local features
// ---------------------------------------------------------------------------

std::array<double, 4> normalized_queues(const LaneObservation& lane) {
  auto norm = [](int q, int cap) {
    return cap > 0 ? static_cast<double>(q) / static_cast<double>(cap) : 0.0;
  };
  return {norm(lane.halted_vert_through, lane.cap_vert_through),
          norm(lane.halted_hor_through, lane.cap_hor_through),
          norm(lane.halted_vert_left, lane.cap_vert_left),
          norm(lane.halted_hor_left, lane.cap_hor_left)};
}

std::vector<double> local_state(const LaneObservation& lane,
                                int phase_action_or_minus1,
                                TopologyKind topology) {
  std::vector<double> x(kLocalWidth, 0.0);
  if (phase_action_or_minus1 >= 0 && phase_action_or_minus1 < kActionCount)
    x[phase_action_or_minus1] = 1.0;
  auto q = normalized_queues(lane);
  for (int i = 0; i < 4; ++i) x[8 + i] = q[i];
  x[12 + static_cast<int>(topology)] = 1.0;
  return x;
}

double local_reward(const LaneObservation& lane) {
  auto q = normalized_queues(lane);
  return -(q[0] + q[1] + q[2] + q[3]);
}

// ---------------------------------------------------------------------------
// Region-wide aggregates
// ---------------------------------------------------------------------------

namespace {

// logic of the member as it counts toward the regional phase proportions:
// the running green's logic, nothing during clearance, otherwise the most
// recent committed logic
std::optional<PhaseLogic> effective_logic(const SignalObservation& obs) {
  if (obs.in_green) return obs.green_logic;
  if (obs.in_clearance) return std::nullopt;
  return obs.last_logic;
}

double boundary_present(const SimCore& sim, const RegionPartition& part,
                        int region) {
  long n = 0;
  for (int ap_id : part.boundary_approaches) {
    const Approach& ap = sim.net().approach(ap_id);
    int r_from = ap.from_node >= 0 ? part.region_of[ap.from_node] : -1;
    int r_to = ap.to_node >= 0 ? part.region_of[ap.to_node] : -1;
    if (r_from == region || r_to == region) n += sim.present_total(ap_id);
  }
  return static_cast<double>(n);
}

}  // namespace

RegionSnapshot observe_region(const SimCore& sim, const RegionPartition& part,
                              int region, const RewardWeights& w,
                              RegionObsState& state) {
  double t = sim.now();
  if (state.ema_init && state.last_t == t) return state.cached;

  const auto& members = part.regions[region];
  RegionSnapshot snap;
  double inv_r = 1.0 / static_cast<double>(members.size());
  int n_approaches = 0, n_spilled = 0, n_clear = 0;
  for (int m : members) {
    SignalObservation sig = sim.observe_signal(m);
    if (auto l = effective_logic(sig))
      snap.phase_proportions[static_cast<int>(*l)] += inv_r;
    if (sig.in_clearance) n_clear += 1;
    LaneObservation lane = sim.observe_lane_metrics(m);
    auto q = normalized_queues(lane);
    for (int i = 0; i < 4; ++i) snap.mean_queues[i] += q[i] * inv_r;
    for (Side s : kSides) {
      int ap = sim.net().node(m).in_approach[static_cast<int>(s)];
      if (ap < 0) continue;
      n_approaches += 1;
      if (sim.queued_total(ap) > w.spill_threshold) n_spilled += 1;
    }
  }
  snap.chi = n_approaches > 0
                 ? static_cast<double>(n_spilled) / static_cast<double>(n_approaches)
                 : 0.0;
  snap.sigma = static_cast<double>(n_clear) * inv_r;

  double n_boundary = boundary_present(sim, part, region);
  if (state.last_t >= 0.0 && t > state.last_t)
    snap.f = (n_boundary - state.last_boundary_n) / (t - state.last_t);
  state.last_boundary_n = n_boundary;
  state.last_t = t;

  if (!state.ema_init) {
    state.ema_chi = snap.chi;
    state.ema_sigma = snap.sigma;
    state.ema_f = snap.f;
    state.ema_init = true;
  } else {
    double b = w.ema_beta;
    state.ema_chi = b * state.ema_chi + (1.0 - b) * snap.chi;
    state.ema_sigma = b * state.ema_sigma + (1.0 - b) * snap.sigma;
    state.ema_f = b * state.ema_f + (1.0 - b) * snap.f;
  }
  state.cached = snap;
  return snap;
}

std::vector<double> regionwide_regional_state(const RegionSnapshot& snap,
                                              const SimCore& sim,
                                              const RegionPartition& part,
                                              int node) {
  std::vector<double> x;
  x.reserve(14);
  for (double p : snap.phase_proportions) x.push_back(p);
  for (double q : snap.mean_queues) x.push_back(q);
  x.push_back(snap.chi);
  x.push_back(snap.f);
  auto nb = onehop_neighbors(sim.net(), part, node);
  for (int j : nb) x.push_back(j < 0 ? 1.0 : 0.0);
  return x;
}

double regionwide_reward(const RegionSnapshot& snap, const RegionObsState& st,
                         const RewardWeights& w) {
  double mean_q = snap.mean_queues[0] + snap.mean_queues[1] +
                  snap.mean_queues[2] + snap.mean_queues[3];
  return -mean_q - w.lambda_spill * st.ema_chi -
         w.lambda_switch * st.ema_sigma + w.lambda_out * st.ema_f;
}

// ---------------------------------------------------------------------------
// One-hop features
// ---------------------------------------------------------------------------

std::array<int, 4> onehop_neighbors(const RoadNetwork& net,
                                    const RegionPartition& part, int node) {
  std::array<int, 4> out{-1, -1, -1, -1};
  int region = part.region_of[node];
  for (Side s : kSides) {
    int nb = net.grid_neighbor(node, s);
    if (nb >= 0 && net.node(nb).signalized && region >= 0 &&
        part.region_of[nb] == region)
      out[static_cast<int>(s)] = nb;
  }
  return out;
}

std::vector<double> onehop_regional_state(const SimCore& sim,
                                          const RegionPartition& part,
                                          int node) {
  const SignalTiming& timing = sim.net().timing();
  double dt_denom = timing.g_long + timing.clearance;
  std::vector<double> x;
  x.reserve(kOneHopWidth);
  auto nbs = onehop_neighbors(sim.net(), part, node);
  for (int j : nbs) {
    if (j < 0) {
      x.insert(x.end(), kOneHopSlot, 0.0);
      continue;
    }
    SignalObservation sig = sim.observe_signal(j);
    for (int a = 0; a < kActionCount; ++a)
      x.push_back(sig.in_green && sig.green_action == a ? 1.0 : 0.0);
    double dt = std::max(0.0, sig.next_decision_time - sim.now());
    x.push_back(dt / dt_denom);
    auto q = normalized_queues(sim.observe_lane_metrics(j));
    for (double v : q) x.push_back(v);
    for (int k = 0; k < 5; ++k)
      x.push_back(static_cast<int>(sim.net().node(j).topology) == k ? 1.0
                                                                    : 0.0);
  }
  LaneObservation own = sim.observe_lane_metrics(node);
  double n_vert = static_cast<double>(own.present_vert - own.halted_vert_through -
                                      own.halted_vert_left);
  double n_hor = static_cast<double>(own.present_hor - own.halted_hor_through -
                                     own.halted_hor_left);
  x.push_back(n_vert);
  x.push_back(n_hor);
  return x;
}

double onehop_reward(const SimCore& sim, const RegionPartition& part,
                     int node) {
  double r = 0.0;
  for (int j : onehop_neighbors(sim.net(), part, node))
    if (j >= 0) r += local_reward(sim.observe_lane_metrics(j));
  return r;
}

double composite_reward(double r_local, double r_regional,
                        const RewardWeights& w) {
  return w.rho_local * r_local + w.rho_regional * r_regional;
}

}  // namespace tsc
