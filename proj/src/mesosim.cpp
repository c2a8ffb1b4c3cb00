#include "tsc/mesosim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "tsc/util.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

const char* to_string(FlowShape s) {
  switch (s) {
    case FlowShape::Uniform: return "uniform";
    case FlowShape::Gaussian: return "gaussian";
    case FlowShape::Weibull: return "weibull";
  }
  return "?";
}

FlowShape flow_shape_from(const std::string& name) {
  if (name == "uniform") return FlowShape::Uniform;
  if (name == "gaussian") return FlowShape::Gaussian;
  if (name == "weibull") return FlowShape::Weibull;
  throw ConfigError("unknown flow distribution: " + name);
}

namespace {

std::vector<double> draw_entry_times(const FlowConfig& flow,
                                     std::mt19937_64& rng) {
  std::vector<double> times;
  times.reserve(flow.total_vehicles);
  const double h = flow.horizon_s;
  switch (flow.shape) {
    case FlowShape::Uniform: {
      std::uniform_real_distribution<double> d(0.0, h);
      for (long i = 0; i < flow.total_vehicles; ++i) times.push_back(d(rng));
      break;
    }
    case FlowShape::Gaussian: {
      std::normal_distribution<double> d(h / 2.0, h / 6.0);
      for (long i = 0; i < flow.total_vehicles; ++i) {
        double t;
        do t = d(rng);
        while (t < 0.0 || t >= h);
        times.push_back(t);
      }
      break;
    }
    case FlowShape::Weibull: {
      // shape 2; scale such that the untruncated mean h/2 (mean = scale *
      // Gamma(1.5) = scale * sqrt(pi)/2).
      double scale = h / std::sqrt(std::acos(-1.0));
      std::weibull_distribution<double> d(2.0, scale);
      for (long i = 0; i < flow.total_vehicles; ++i) {
        double t;
        do t = d(rng);
        while (t >= h);
        times.push_back(t);
      }
      break;
    }
  }
  std::sort(times.begin(), times.end());
  return times;
}

// Deterministic shortest-path tree (link length weights, first strict
// improvement wins) from one source node.
struct PathTree {
  std::vector<double> dist;
  std::vector<int> pred;  // predecessor node, -1 at source/unreached
};

PathTree shortest_paths(const RoadNetwork& net, int source) {
  const double inf = std::numeric_limits<double>::infinity();
  PathTree t;
  t.dist.assign(net.nodes().size(), inf);
  t.pred.assign(net.nodes().size(), -1);
  t.dist[source] = 0.0;
  using Qe = std::pair<double, int>;
  std::priority_queue<Qe, std::vector<Qe>, std::greater<Qe>> pq;
  pq.emplace(0.0, source);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > t.dist[u]) continue;
    for (Side s : kSides) {
      int ap_id = net.node(u).out_approach[static_cast<int>(s)];
      if (ap_id < 0) continue;
      const Approach& ap = net.approach(ap_id);
      if (ap.to_node < 0) continue;
      double nd = d + ap.length_m;
      if (nd < t.dist[ap.to_node]) {
        t.dist[ap.to_node] = nd;
        t.pred[ap.to_node] = u;
        pq.emplace(nd, ap.to_node);
      }
    }
  }
  return t;
}

int approach_between(const RoadNetwork& net, int u, int v) {
  for (Side s : kSides) {
    int ap_id = net.node(u).out_approach[static_cast<int>(s)];
    if (ap_id >= 0 && net.approach(ap_id).to_node == v) return ap_id;
  }
  throw SimError("no approach between adjacent nodes");
}

}  // namespace

std::vector<DemandVehicle> generate_demand(const FlowConfig& flow,
                                           const RoadNetwork& net,
                                           std::uint64_t seed) {
  const auto& entries = net.entry_approaches();
  const auto& exits = net.exit_approaches();
  if (entries.empty() || exits.size() < 2)
    throw ConfigError("network needs at least one entry and two exits");

  auto rng = make_rng(seed, 0x0de11a2d);
  std::vector<double> times = draw_entry_times(flow, rng);

  // Route cache per (entry, exit).
  std::map<int, PathTree> trees;
  std::map<std::pair<int, int>, std::vector<int>> routes;
  auto route_for = [&](int entry_id, int exit_id) -> const std::vector<int>& {
    auto key = std::make_pair(entry_id, exit_id);
    auto it = routes.find(key);
    if (it != routes.end()) return it->second;
    int src = net.approach(entry_id).to_node;
    int dst = net.approach(exit_id).from_node;
    auto tr = trees.find(src);
    if (tr == trees.end()) tr = trees.emplace(src, shortest_paths(net, src)).first;
    if (!std::isfinite(tr->second.dist[dst]))
      throw SimError("boundary exit unreachable from entry");
    std::vector<int> nodes{dst};
    for (int v = dst; v != src; v = tr->second.pred[v]) nodes.push_back(tr->second.pred[v]);
    std::reverse(nodes.begin(), nodes.end());
    std::vector<int> route{entry_id};
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
      route.push_back(approach_between(net, nodes[i], nodes[i + 1]));
    route.push_back(exit_id);
    return routes.emplace(key, std::move(route)).first->second;
  };

  std::uniform_int_distribution<std::size_t> entry_pick(0, entries.size() - 1);
  std::vector<DemandVehicle> demand;
  demand.reserve(times.size());
  for (double t : times) {
    int entry_id = entries[entry_pick(rng)];
    int entry_node = net.approach(entry_id).to_node;
    std::vector<int> candidates;
    for (int x : exits)
      if (net.approach(x).from_node != entry_node) candidates.push_back(x);
    std::uniform_int_distribution<std::size_t> exit_pick(0, candidates.size() - 1);
    int exit_id = candidates[exit_pick(rng)];
    DemandVehicle v;
    v.entry_time = t;
    v.route = route_for(entry_id, exit_id);
    demand.push_back(std::move(v));
  }

  // Nominal entry capacity check: warn only.
  if (flow.horizon_s > 0 && !entries.empty()) {
    double per_entry = static_cast<double>(flow.total_vehicles) /
                       flow.horizon_s / static_cast<double>(entries.size());
    const Approach& e0 = net.approach(entries.front());
    double cap = static_cast<double>(e0.lanes) / 2.0;  // veh/s at saturation
    if (per_entry > cap)
      std::cerr << "warning: flow " << flow.name << " mean entry rate "
                << per_entry << " veh/s exceeds entry capacity " << cap
                << " veh/s\n";
  }
  return demand;
}

// ---------------------------------------------------------------------------
// Event log serialization
// ---------------------------------------------------------------------------

const char* to_string(EvKind k) {
  switch (k) {
    case EvKind::Decide: return "decide";
    case EvKind::Discharge: return "discharge";
    case EvKind::Arrive: return "arrive";
    case EvKind::Inject: return "inject";
    case EvKind::Sample: return "sample";
  }
  return "?";
}

std::string event_log_to_csv(const std::vector<EvRecord>& log) {
  std::string out = "t,kind,vehicle,node,approach,turn,action\n";
  for (const auto& r : log) {
    out += fmt_exact(r.t);
    out += ',';
    out += to_string(r.kind);
    out += ',';
    out += std::to_string(r.vehicle);
    out += ',';
    out += std::to_string(r.node);
    out += ',';
    out += std::to_string(r.approach);
    out += ',';
    out += std::to_string(r.turn);
    out += ',';
    out += std::to_string(r.action);
    out += '\n';
  }
  return out;
}

std::vector<EvRecord> event_log_from_csv(const std::string& csv) {
  std::vector<EvRecord> out;
  std::istringstream ss(csv);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    EvRecord r;
    std::getline(ls, cell, ',');
    r.t = parse_exact(cell);
    std::getline(ls, cell, ',');
    if (cell == "decide") r.kind = EvKind::Decide;
    else if (cell == "discharge") r.kind = EvKind::Discharge;
    else if (cell == "arrive") r.kind = EvKind::Arrive;
    else if (cell == "inject") r.kind = EvKind::Inject;
    else if (cell == "sample") r.kind = EvKind::Sample;
    else throw SimError("bad event kind: " + cell);
    std::getline(ls, cell, ',');
    r.vehicle = std::stoi(cell);
    std::getline(ls, cell, ',');
    r.node = std::stoi(cell);
    std::getline(ls, cell, ',');
    r.approach = std::stoi(cell);
    std::getline(ls, cell, ',');
    r.turn = std::stoi(cell);
    std::getline(ls, cell, ',');
    r.action = std::stoi(cell);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics from the event log
// ---------------------------------------------------------------------------

MetricsReport compute_metrics(const std::vector<EvRecord>& log,
                              const RoadNetwork& net, double horizon_s,
                              double sample_interval_s) {
  (void)horizon_s;
  (void)sample_interval_s;
  MetricsReport rep;
  std::map<int, double> entry_t, pending_arrive, wait_total;
  std::vector<long> node_q(net.nodes().size(), 0);
  long n_sig = static_cast<long>(net.signalized_ids().size());
  double window_wait = 0.0;
  long window_done = 0;
  double wait_sum = 0.0, tt_sum = 0.0;
  long completed = 0, entered = 0;
  for (const auto& r : log) {
    switch (r.kind) {
      case EvKind::Inject:
        entry_t[r.vehicle] = r.t;
        ++entered;
        break;
      case EvKind::Arrive:
        if (r.node < 0) {  // sink: trip complete
          double w = wait_total.count(r.vehicle) ? wait_total[r.vehicle] : 0.0;
          wait_sum += w;
          tt_sum += r.t - entry_t.at(r.vehicle);
          window_wait += w;
          ++window_done;
          ++completed;
        } else {
          pending_arrive[r.vehicle] = r.t;
          ++node_q[r.node];
        }
        break;
      case EvKind::Discharge: {
        wait_total[r.vehicle] += r.t - pending_arrive.at(r.vehicle);
        --node_q[r.node];
        break;
      }
      case EvKind::Decide:
        break;
      case EvKind::Sample: {
        long q = 0;
        for (int id : net.signalized_ids()) q += node_q[id];
        rep.sample_times.push_back(r.t);
        rep.aql_series.push_back(n_sig > 0 ? static_cast<double>(q) /
                                                 static_cast<double>(n_sig)
                                           : 0.0);
        rep.awt_inst_series.push_back(
            window_done > 0 ? window_wait / static_cast<double>(window_done)
                            : 0.0);
        window_wait = 0.0;
        window_done = 0;
        break;
      }
    }
  }
  if (completed == 0) throw SimError("no completed trips in event log");
  rep.completed = completed;
  rep.entered = entered;
  rep.awt = wait_sum / static_cast<double>(completed);
  rep.att = tt_sum / static_cast<double>(completed);
  rep.aql = mean_of(rep.aql_series);
  return rep;
}

// ---------------------------------------------------------------------------
// SimCore
// ---------------------------------------------------------------------------

bool SimCore::EvLater::operator()(const Ev& x, const Ev& y) const {
  // "later" ordering for the max-heap: true when x fires after y
  if (x.t != y.t) return x.t > y.t;
  if (x.kind != y.kind) return x.kind > y.kind;
  if (x.a != y.a) return x.a > y.a;
  if (x.b != y.b) return x.b > y.b;
  return x.seq > y.seq;
}

SimCore::SimCore(const RoadNetwork& net, const MesoParams& params,
                 double horizon_s)
    : net_(net), params_(params), horizon_(horizon_s) {
  if (horizon_ <= 0) throw ConfigError("horizon must be positive");
  groups_.resize(net.approaches().size() * 2);
  for (const Approach& ap : net.approaches())
    for (TurnGroup g : {TurnGroup::Through, TurnGroup::Left}) {
      GroupState& st = groups_[group_ordinal(ap.id, g)];
      st.lanes = ap.group_lanes(g);
      int per_lane =
          static_cast<int>(std::floor(ap.length_m / params_.vehicle_space_m));
      st.capacity = std::max(1, per_lane) * st.lanes;
    }
  node_state_.resize(net.nodes().size());
  entry_waiters_.resize(net.approaches().size());
  queue_integral_.assign(net.nodes().size(), 0.0);
  node_queue_count_.assign(net.nodes().size(), 0);
}

void SimCore::set_demand(std::vector<DemandVehicle> demand) {
  demand_ = std::move(demand);
  vehicles_.assign(demand_.size(), Vehicle{});
  for (std::size_t i = 0; i < demand_.size(); ++i) {
    vehicles_[i].route = &demand_[i].route;
    if (demand_[i].route.size() < 2) throw ConfigError("route too short");
  }
}

SimCore::GroupState& SimCore::group(int approach, TurnGroup g) {
  return groups_[group_ordinal(approach, g)];
}
const SimCore::GroupState& SimCore::group(int approach, TurnGroup g) const {
  return groups_[group_ordinal(approach, g)];
}

double SimCore::traversal_s(int approach) const {
  return net_.approach(approach).length_m / params_.free_speed_mps;
}

TurnGroup SimCore::turn_group_at(const Vehicle& v, int route_pos) const {
  const auto& route = *v.route;
  const Approach& ap = net_.approach(route[route_pos]);
  if (ap.is_exit()) return TurnGroup::Through;
  int node = ap.to_node;
  const Approach& next = net_.approach(route[route_pos + 1]);
  Side s_out = Side::North;
  bool found = false;
  for (Side s : kSides)
    if (net_.node(node).out_approach[static_cast<int>(s)] == next.id) {
      s_out = s;
      found = true;
    }
  if (!found) throw SimError("route discontinuity");
  if (s_out == ap.side) throw SimError("u-turn in route");
  Side heading = heading_from(ap.side);
  if (s_out == left_exit(heading)) return TurnGroup::Left;
  return TurnGroup::Through;  // straight and folded right turns
}

bool SimCore::has_space(int approach, TurnGroup g) const {
  const GroupState& st = group(approach, g);
  return static_cast<int>(st.queue.size()) + st.in_transit < st.capacity;
}

void SimCore::push_event(double t, EvKind kind, int a, int b, long epoch) {
  events_.push(Ev{t, kind, a, b, epoch, seq_++});
}

void SimCore::log_event(double t, EvKind kind, int vehicle, int node,
                        int approach, int turn, int action) {
  if (!log_enabled_) return;
  log_.push_back(EvRecord{t, kind, vehicle, node, approach, turn, action});
}

void SimCore::advance_queue_integral(double t) {
  if (t <= last_integral_t_) return;
  double dt = t - last_integral_t_;
  for (std::size_t i = 0; i < queue_integral_.size(); ++i)
    queue_integral_[i] += dt * static_cast<double>(node_queue_count_[i]);
  last_integral_t_ = t;
}

void SimCore::run() {
  if (ran_) throw SimError("SimCore::run is single-shot");
  if (!controller_ && !net_.signalized_ids().empty())
    throw SimError("no controller set");
  if (controller_) controller_->episode_begin(*this);
  for (int id : net_.signalized_ids()) push_event(0.0, EvKind::Decide, id, 0, 0);
  for (double t = 0.0; t < horizon_; t += params_.sample_interval_s)
    push_event(t, EvKind::Sample, 0, 0, 0);
  for (std::size_t i = 0; i < demand_.size(); ++i)
    push_event(demand_[i].entry_time, EvKind::Inject, static_cast<int>(i), 0, 0);

  while (!events_.empty()) {
    Ev e = events_.top();
    if (e.t >= horizon_) break;
    events_.pop();
    if (e.t < now_) throw SimError("clock went backwards");
    advance_queue_integral(e.t);
    now_ = e.t;
    switch (e.kind) {
      case EvKind::Decide: handle_decide(e); break;
      case EvKind::Discharge: handle_discharge(e); break;
      case EvKind::Arrive: handle_arrive(e); break;
      case EvKind::Inject: handle_inject(e); break;
      case EvKind::Sample: handle_sample(e); break;
    }
    if (entered_ != exited_ + in_network_) throw SimError("conservation violated");
  }
  if (events_.empty() && in_network_ > 0 && now_ < horizon_)
    throw SimError("deadlock: clock cannot advance with vehicles in network");
  finish_at_horizon();
}

void SimCore::finish_at_horizon() {
  advance_queue_integral(horizon_);
  now_ = horizon_;
  if (controller_) controller_->episode_end(*this);
  ran_ = true;
}

void SimCore::handle_inject(const Ev& e) {
  int veh = e.a;
  Vehicle& v = vehicles_[veh];
  int entry = (*v.route)[0];
  TurnGroup g = turn_group_at(v, 0);
  if (!has_space(entry, g)) {
    entry_waiters_[entry].push_back(veh);
    return;
  }
  v.entered = true;
  v.entry_time = now_;
  ++entered_;
  ++in_network_;
  group(entry, g).in_transit += 1;
  log_event(now_, EvKind::Inject, veh, net_.approach(entry).to_node, entry,
            static_cast<int>(g), -1);
  push_event(now_ + traversal_s(entry), EvKind::Arrive, veh, 0, 0);
}

void SimCore::handle_arrive(const Ev& e) {
  int veh = e.a;
  Vehicle& v = vehicles_[veh];
  int ap_id = (*v.route)[v.route_pos];
  const Approach& ap = net_.approach(ap_id);
  TurnGroup g = turn_group_at(v, v.route_pos);
  GroupState& st = group(ap_id, g);

  if (ap.is_exit()) {  // sink arrival: trip complete
    st.in_transit -= 1;
    v.exited = true;
    v.exit_time = now_;
    ++exited_;
    --in_network_;
    completed_ += 1;
    completed_wait_sum_ += v.wait_s;
    completed_tt_sum_ += now_ - v.entry_time;
    window_wait_sum_ += v.wait_s;
    window_completed_ += 1;
    log_event(now_, EvKind::Arrive, veh, -1, ap_id, static_cast<int>(g), -1);
    return;
  }

  int node = ap.to_node;
  st.in_transit -= 1;
  st.last_join = now_;
  log_event(now_, EvKind::Arrive, veh, node, ap_id, static_cast<int>(g), -1);

  if (!net_.node(node).signalized && st.queue.empty()) {
    // pass-through node, clear path: forward without dwell
    int next_pos = v.route_pos + 1;
    TurnGroup g2 = turn_group_at(v, next_pos);
    int next_id = (*v.route)[next_pos];
    if (net_.approach(next_id).is_exit() || has_space(next_id, g2)) {
      log_event(now_, EvKind::Discharge, veh, node, ap_id, static_cast<int>(g),
                -1);
      forward_vehicle(veh, now_);
      release_space(ap_id);
      return;
    }
  }

  st.queue.push_back(veh);
  st.join_t.push_back(now_);
  v.in_queue = true;
  node_queue_count_[node] += 1;
  if (static_cast<int>(st.queue.size()) > st.capacity)
    throw SimError("lane group queue exceeds capacity");
  if (!net_.node(node).signalized && !st.service_pending) {
    st.service_pending = true;
    push_event(now_ + params_.saturation_headway_s, EvKind::Discharge, node,
               group_ordinal(ap_id, g), 0);
  }
}

void SimCore::forward_vehicle(int veh, double t) {
  Vehicle& v = vehicles_[veh];
  v.route_pos += 1;
  int next_id = (*v.route)[v.route_pos];
  TurnGroup g2 = turn_group_at(v, v.route_pos);
  group(next_id, g2).in_transit += 1;
  push_event(t + traversal_s(next_id), EvKind::Arrive, veh, 0, 0);
}

void SimCore::release_space(int approach) {
  if (!net_.approach(approach).is_entry()) return;
  auto& waiters = entry_waiters_[approach];
  while (!waiters.empty()) {
    int veh = waiters.front();
    Vehicle& v = vehicles_[veh];
    TurnGroup g = turn_group_at(v, 0);
    if (!has_space(approach, g)) break;
    waiters.pop_front();
    v.entered = true;
    v.entry_time = now_;
    ++entered_;
    ++in_network_;
    group(approach, g).in_transit += 1;
    log_event(now_, EvKind::Inject, veh, net_.approach(approach).to_node,
              approach, static_cast<int>(g), -1);
    push_event(now_ + traversal_s(approach), EvKind::Arrive, veh, 0, 0);
  }
}

void SimCore::depart_one(int node, int approach, TurnGroup g, double t) {
  GroupState& st = group(approach, g);
  int veh = st.queue.front();
  double joined = st.join_t.front();
  st.queue.pop_front();
  st.join_t.pop_front();
  Vehicle& v = vehicles_[veh];
  v.in_queue = false;
  v.wait_s += t - joined;
  node_queue_count_[node] -= 1;
  log_event(t, EvKind::Discharge, veh, node, approach, static_cast<int>(g), -1);
  forward_vehicle(veh, t);
  release_space(approach);
}

void SimCore::handle_discharge(const Ev& e) {
  int node = e.a;
  int approach = e.b / 2;
  TurnGroup g = static_cast<TurnGroup>(e.b % 2);
  GroupState& st = group(approach, g);
  const bool signalized = net_.node(node).signalized;

  if (signalized) {
    NodeState& ns = node_state_[node];
    if (e.epoch != ns.epoch) return;  // stale slot from an ended phase
    if (!(now_ >= ns.green_start && now_ < ns.green_end)) return;
  } else {
    st.service_pending = false;
  }

  for (int lane = 0; lane < st.lanes; ++lane) {
    if (st.queue.empty()) break;
    Vehicle& v = vehicles_[st.queue.front()];
    int next_pos = v.route_pos + 1;
    int next_id = (*v.route)[next_pos];
    TurnGroup g2 = turn_group_at(v, next_pos);
    if (!net_.approach(next_id).is_exit() && !has_space(next_id, g2))
      break;  // downstream full: head-of-line block, queue unchanged this slot
    depart_one(node, approach, g, now_);
  }

  double next_t = now_ + params_.saturation_headway_s;
  if (signalized) {
    const NodeState& ns = node_state_[node];
    if (next_t < ns.green_end)
      push_event(next_t, EvKind::Discharge, node, e.b, ns.epoch);
  } else if (!st.queue.empty()) {
    st.service_pending = true;
    push_event(next_t, EvKind::Discharge, node, e.b, 0);
  }
}

void SimCore::apply_command(int node, const PhaseCommand& cmd) {
  NodeState& st = node_state_[node];
  if (!logic_admissible(net_.node(node).topology, cmd.logic))
    throw SimError("inadmissible phase logic commanded at node " +
                   std::to_string(node));
  if (cmd.green_s <= 0) throw SimError("non-positive green");
  double c = clearance_cost(net_.timing(), st.last_logic, cmd.logic);
  st.epoch += 1;
  st.green_start = now_ + c;
  st.green_end = st.green_start + cmd.green_s;
  st.logic = cmd.logic;
  st.green_action = cmd.action;
  st.last_action = cmd.action;
  st.last_logic = cmd.logic;
  st.next_decision = st.green_end;

  log_event(now_, EvKind::Decide, -1, node, -1, static_cast<int>(cmd.logic),
            cmd.action);
  decisions_.push_back(
      DecisionAudit{node, now_, cmd.action, cmd.logic, cmd.green_s, c});

  schedule_group_slots(node, st.green_start);
  push_event(st.green_end, EvKind::Decide, node, 0, st.epoch);
}

void SimCore::schedule_group_slots(int node, double from_t) {
  // first discharge slot at or after from_t on the green_start + k*h cadence,
  // k >= 1 (the first vehicle clears one headway into the green)
  const NodeState& st = node_state_[node];
  double h = params_.saturation_headway_s;
  long k = static_cast<long>(std::ceil((from_t - st.green_start) / h - 1e-9));
  if (k < 1) k = 1;
  double slot = st.green_start + static_cast<double>(k) * h;
  if (slot >= st.green_end) return;
  for (auto [side, turn] : net_.served(node, st.logic)) {
    int ap = net_.node(node).in_approach[static_cast<int>(side)];
    push_event(slot, EvKind::Discharge, node, group_ordinal(ap, turn),
               st.epoch);
  }
}

void SimCore::handle_decide(const Ev& e) {
  int node = e.a;
  NodeState& st = node_state_[node];
  if (e.epoch != st.epoch) return;  // superseded command
  if (st.epoch > 0) {               // a green just expired: offer an extension
    double extra = controller_->extend_green(*this, node);
    if (extra > 0) {
      st.green_end += extra;
      st.next_decision = st.green_end;
      schedule_group_slots(node, now_);
      push_event(st.green_end, EvKind::Decide, node, 0, st.epoch);
      return;
    }
  }
  apply_command(node, controller_->decide(*this, node));
}

void SimCore::handle_sample(const Ev&) {
  long q = 0;
  for (int id : net_.signalized_ids()) q += node_queue_count_[id];
  long n_sig = static_cast<long>(net_.signalized_ids().size());
  sample_times_.push_back(now_);
  aql_series_.push_back(
      n_sig > 0 ? static_cast<double>(q) / static_cast<double>(n_sig) : 0.0);
  awt_inst_series_.push_back(window_completed_ > 0
                                 ? window_wait_sum_ /
                                       static_cast<double>(window_completed_)
                                 : 0.0);
  window_wait_sum_ = 0.0;
  window_completed_ = 0;
  log_event(now_, EvKind::Sample, -1, -1, -1, -1, -1);
}

int SimCore::queued(int approach, TurnGroup g) const {
  return static_cast<int>(group(approach, g).queue.size());
}

int SimCore::queued_total(int approach) const {
  return queued(approach, TurnGroup::Through) + queued(approach, TurnGroup::Left);
}

double SimCore::last_arrival(int approach, TurnGroup g) const {
  return group(approach, g).last_join;
}

int SimCore::present_total(int approach) const {
  const GroupState& a = group(approach, TurnGroup::Through);
  const GroupState& b = group(approach, TurnGroup::Left);
  return static_cast<int>(a.queue.size()) + a.in_transit +
         static_cast<int>(b.queue.size()) + b.in_transit;
}

LaneObservation SimCore::observe_lane_metrics(int node) const {
  LaneObservation o;
  const Intersection& n = net_.node(node);
  for (Side s : kSides) {
    int ap = n.in_approach[static_cast<int>(s)];
    if (ap < 0) continue;
    int thr = queued(ap, TurnGroup::Through);
    int left = queued(ap, TurnGroup::Left);
    o.approach_queue[static_cast<int>(s)] = thr + left;
    int cap_thr = group(ap, TurnGroup::Through).capacity;
    int cap_left = group(ap, TurnGroup::Left).capacity;
    if (is_vertical(s)) {
      o.halted_vert_through += thr;
      o.halted_vert_left += left;
      o.cap_vert_through += cap_thr;
      o.cap_vert_left += cap_left;
      o.present_vert += present_total(ap);
    } else {
      o.halted_hor_through += thr;
      o.halted_hor_left += left;
      o.cap_hor_through += cap_thr;
      o.cap_hor_left += cap_left;
      o.present_hor += present_total(ap);
    }
  }
  return o;
}

SignalObservation SimCore::observe_signal(int node) const {
  const NodeState& st = node_state_[node];
  SignalObservation o;
  bool committed = st.epoch > 0;
  o.in_green = committed && now_ >= st.green_start && now_ < st.green_end;
  o.in_clearance = committed && now_ < st.green_start;
  o.green_logic = st.logic;
  o.green_action = o.in_green ? st.green_action : -1;
  o.last_action = st.last_action;
  o.last_logic = st.last_logic;
  o.next_decision_time = st.next_decision;
  return o;
}

std::vector<double> SimCore::mean_incoming_queue() const {
  std::vector<double> out(queue_integral_.size(), 0.0);
  double t = last_integral_t_;
  if (t <= 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = queue_integral_[i] / t;
  return out;
}

MetricsReport SimCore::metrics() const {
  if (completed_ == 0) throw SimError("no completed trips");
  MetricsReport rep;
  rep.completed = completed_;
  rep.entered = entered_;
  rep.awt = completed_wait_sum_ / static_cast<double>(completed_);
  rep.att = completed_tt_sum_ / static_cast<double>(completed_);
  rep.aql = mean_of(aql_series_);
  rep.sample_times = sample_times_;
  rep.aql_series = aql_series_;
  rep.awt_inst_series = awt_inst_series_;
  return rep;
}

void SimCore::audit_state() const {
  long total = 0;
  for (const Approach& ap : net_.approaches())
    for (TurnGroup g : {TurnGroup::Through, TurnGroup::Left}) {
      const GroupState& st = group(ap.id, g);
      if (static_cast<int>(st.queue.size()) > st.capacity)
        throw SimError("queue over capacity");
      if (static_cast<int>(st.queue.size()) + st.in_transit > st.capacity)
        throw SimError("occupancy over capacity");
      total += static_cast<long>(st.queue.size()) + st.in_transit;
    }
  if (total != in_network_) throw SimError("vehicle count mismatch");
  if (entered_ != exited_ + in_network_) throw SimError("conservation violated");
  std::vector<int> counts(net_.nodes().size(), 0);
  for (const Approach& ap : net_.approaches()) {
    if (ap.to_node < 0) continue;
    counts[ap.to_node] += queued_total(ap.id);
  }
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] != node_queue_count_[i])
      throw SimError("node queue count mismatch");
}

}  // namespace tsc
