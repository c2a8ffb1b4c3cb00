#include "tsc/controllers.hpp"

#include <algorithm>

#include "tsc/util.hpp"

namespace tsc {

namespace {

// distinct admissible logics in enum order (each appears with both durations)
std::vector<PhaseLogic> admissible_logics(const RoadNetwork& net, int node) {
  std::vector<PhaseLogic> out;
  for (int idx : net.admissible(node)) {
    PhaseLogic l = action_from_index(idx).logic;
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

}  // namespace

void FixedTimeController::episode_begin(SimCore& sim) {
  cursor_.assign(sim.net().nodes().size(), 0);
}

PhaseCommand FixedTimeController::decide(SimCore& sim, int node) {
  auto logics = admissible_logics(sim.net(), node);
  int& cur = cursor_[node];
  PhaseLogic l = logics[cur % logics.size()];
  cur = (cur + 1) % static_cast<int>(logics.size());
  PhaseCommand cmd;
  cmd.logic = l;
  cmd.green_s =
      green_seconds(sim.net().timing(), PhaseAction{l, GreenLength::Long});
  return cmd;
}

void RandomController::episode_begin(SimCore&) {
  rng_ = make_rng(seed_, 0x7a2d0c71);
}

PhaseCommand RandomController::decide(SimCore& sim, int node) {
  const auto& adm = sim.net().admissible(node);
  std::uniform_int_distribution<std::size_t> pick(0, adm.size() - 1);
  int idx = adm[pick(rng_)];
  PhaseAction a = action_from_index(idx);
  return PhaseCommand{a.logic, green_seconds(sim.net().timing(), a), idx};
}

void ActuatedController::episode_begin(SimCore& sim) {
  cursor_.assign(sim.net().nodes().size(), 0);
  green_start_.assign(sim.net().nodes().size(), 0.0);
}

PhaseCommand ActuatedController::decide(SimCore& sim, int node) {
  auto logics = admissible_logics(sim.net(), node);
  int& cur = cursor_[node];
  PhaseLogic l = logics[cur % logics.size()];
  cur = (cur + 1) % static_cast<int>(logics.size());
  SignalObservation obs = sim.observe_signal(node);
  double c = clearance_cost(sim.net().timing(), obs.last_logic, l);
  green_start_[node] = sim.now() + c;
  PhaseCommand cmd;
  cmd.logic = l;
  cmd.green_s = params_.min_green_s;
  return cmd;
}

double ActuatedController::last_served_arrival(SimCore& sim, int node) const {
  SignalObservation obs = sim.observe_signal(node);
  if (!obs.last_logic) return -1e300;
  double last = -1e300;
  for (auto [side, turn] : sim.net().served(node, *obs.last_logic)) {
    int ap = sim.net().node(node).in_approach[static_cast<int>(side)];
    last = std::max(last, sim.last_arrival(ap, turn));
  }
  return last;
}

double ActuatedController::extend_green(SimCore& sim, int node) {
  double elapsed = sim.now() - green_start_[node];
  if (elapsed >= params_.max_green_s) return 0.0;
  double gap = sim.now() - last_served_arrival(sim, node);
  if (gap >= params_.critical_gap_s) return 0.0;  // gapped out
  return std::min(params_.critical_gap_s, params_.max_green_s - elapsed);
}

}  // namespace tsc
