#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "tsc/netmodel.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

enum class FlowShape { Uniform, Gaussian, Weibull };
const char* to_string(FlowShape s);
FlowShape flow_shape_from(const std::string& name);

struct FlowConfig {
  std::string name;
  FlowShape shape = FlowShape::Uniform;
  long total_vehicles = 0;
  double avg_rate = 0.0;  // nominal veh/s label for reports
  double horizon_s = 18000.0;
};

struct DemandVehicle {
  double entry_time = 0.0;
  std::vector<int> route;  // approach ids, entry link first, exit link last
};

/// Entry times: Uniform over [0,H); Gaussian truncated N(H/2, H/6); Weibull
/// shape 2 with the scale chosen so the untruncated mean is H/2, truncated to
/// [0,H). Entry approach uniform over boundary entries; exit uniform over
/// boundary exits at a different corner; route is the deterministic shortest
/// path. Result sorted by entry time. Over-capacity entry rates warn only.
std::vector<DemandVehicle> generate_demand(const FlowConfig& flow,
                                           const RoadNetwork& net,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

struct MesoParams {
  double free_speed_mps = 13.9;
  double saturation_headway_s = 2.0;
  double vehicle_space_m = 7.5;
  double sample_interval_s = 10.0;
};

enum class EvKind : int {
  Decide = 0,
  Discharge = 1,
  Arrive = 2,
  Inject = 3,
  Sample = 4
};
const char* to_string(EvKind k);

/// One event-log line. Unused fields are -1. Inject marks network entry,
/// Arrive a queue join (or, with node -1, the sink arrival completing the
/// trip), Discharge one vehicle leaving its queue. For Decide records
/// `action` is the global action index (-1 for rule-based controllers) and
/// `turn` carries the phase logic ordinal.
struct EvRecord {
  double t = 0.0;
  EvKind kind = EvKind::Inject;
  int vehicle = -1;
  int node = -1;
  int approach = -1;
  int turn = -1;
  int action = -1;
};

std::string event_log_to_csv(const std::vector<EvRecord>& log);
std::vector<EvRecord> event_log_from_csv(const std::string& csv);

struct MetricsReport {
  double awt = 0.0;  // mean accumulated queue wait over completed trips
  double att = 0.0;  // mean exit - entry over completed trips
  double aql = 0.0;  // mean over samples and signalized nodes of queue sums
  long completed = 0;
  long entered = 0;
  std::vector<double> sample_times;
  std::vector<double> aql_series;       // network mean queue per sample
  std::vector<double> awt_inst_series;  // mean wait of trips completed in
                                        // the preceding sample interval
};

/// Recompute the report purely from an event log (the simulator's internal
/// accounting must agree exactly). Throws SimError when no trip completed.
MetricsReport compute_metrics(const std::vector<EvRecord>& log,
                              const RoadNetwork& net, double horizon_s,
                              double sample_interval_s);

struct PhaseCommand {
  PhaseLogic logic = PhaseLogic::NS_S;
  double green_s = 0.0;
  int action = -1;  // global action index when duration-coded, else -1
};

class SimCore;

/// Signal policy surface. decide() runs at every decision instant (green
/// expiry, or t=0); extend_green() lets gap-actuated control stretch the
/// running green before the decision fires.
class SignalController {
 public:
  virtual ~SignalController() = default;
  virtual void episode_begin(SimCore&) {}
  virtual PhaseCommand decide(SimCore& sim, int node) = 0;
  virtual double extend_green(SimCore&, int) { return 0.0; }
  /// Called once when the horizon is reached, before run() returns.
  virtual void episode_end(SimCore&) {}
};

struct LaneObservation {
  // halted = queued behind the stop line; aggregated over existing incoming
  // approaches by axis and turn group
  int halted_vert_through = 0, halted_hor_through = 0;
  int halted_vert_left = 0, halted_hor_left = 0;
  // present = queued + in transit on the approach
  int present_vert = 0, present_hor = 0;
  std::array<int, 4> approach_queue = {0, 0, 0, 0};  // by Side, absent leg 0
  // vehicle-capacity denominators of the contributing lane groups
  int cap_vert_through = 0, cap_hor_through = 0;
  int cap_vert_left = 0, cap_hor_left = 0;
};

struct SignalObservation {
  bool in_green = false;
  bool in_clearance = false;
  PhaseLogic green_logic = PhaseLogic::NS_S;  // valid while in_green
  int green_action = -1;   // action of the running green, -1 if rule-based
  int last_action = -1;    // most recent committed action, -1 before first
  std::optional<PhaseLogic> last_logic;  // most recent committed logic
  double next_decision_time = 0.0;
};

struct DecisionAudit {
  int node = -1;
  double t = 0.0;       // decision instant (green expiry of the previous)
  int action = -1;      // -1 for rule-based commands
  PhaseLogic logic = PhaseLogic::NS_S;
  double green_s = 0.0;
  double clearance_s = 0.0;
};

/// Event-driven mesoscopic engine: free-flow link traversal, FIFO queues per
/// lane group, saturation-headway discharge under green, capacity-gated link
/// entry (spillback). Same-instant events process as phase expiries, then
/// discharges (node id, lane group order), then arrivals, injections, and
/// samples. Fully deterministic for fixed demand.
class SimCore {
 public:
  SimCore(const RoadNetwork& net, const MesoParams& params, double horizon_s);

  void set_controller(SignalController* c) { controller_ = c; }
  void set_demand(std::vector<DemandVehicle> demand);
  void set_event_log_enabled(bool on) { log_enabled_ = on; }

  void run();

  // -- observation surface ------------------------------------------------
  double now() const { return now_; }
  double horizon() const { return horizon_; }
  const RoadNetwork& net() const { return net_; }
  const MesoParams& params() const { return params_; }
  int queued(int approach, TurnGroup g) const;
  int queued_total(int approach) const;
  int present_total(int approach) const;
  /// Time of the most recent arrival on the lane group (gap-out detector);
  /// very negative before any arrival.
  double last_arrival(int approach, TurnGroup g) const;
  LaneObservation observe_lane_metrics(int node) const;
  SignalObservation observe_signal(int node) const;
  /// Time-averaged total queue on the incoming approaches of each node
  /// (region-formation congestion measure).
  std::vector<double> mean_incoming_queue() const;

  long entered() const { return entered_; }
  long exited() const { return exited_; }
  long in_network() const { return in_network_; }

  const std::vector<EvRecord>& event_log() const { return log_; }
  const std::vector<DecisionAudit>& decisions() const { return decisions_; }
  /// Internal-accounting metrics; equals compute_metrics() of the log.
  MetricsReport metrics() const;

  /// Recount every vehicle position and check conservation; throws SimError
  /// on any mismatch. Cheap counters are asserted continuously; this is the
  /// full audit used by tests.
  void audit_state() const;

 private:
  struct GroupState {
    std::deque<int> queue;       // vehicle ids, FIFO
    std::deque<double> join_t;   // parallel join times
    int in_transit = 0;
    int capacity = 0;
    int lanes = 1;
    double last_join = -1e300;   // actuated detector
    bool service_pending = false;  // unsignalized service slot scheduled
  };
  struct NodeState {
    PhaseLogic logic = PhaseLogic::NS_S;
    int green_action = -1;
    int last_action = -1;
    std::optional<PhaseLogic> last_logic;
    double green_start = 0.0, green_end = 0.0;
    double next_decision = 0.0;
    long epoch = 0;  // bumps on every commanded phase; stale events no-op
  };
  struct Vehicle {
    double entry_time = 0.0;   // actual network entry
    double exit_time = -1.0;
    double wait_s = 0.0;
    bool entered = false, exited = false;
    int route_pos = 0;              // index into route
    const std::vector<int>* route = nullptr;
    bool in_queue = false;
  };
  struct Ev {
    double t;
    EvKind kind;
    int a;  // node (Decide/Discharge) or vehicle (Arrive/Inject)
    int b;  // lane-group ordinal for Discharge
    long epoch;
    std::uint64_t seq;
  };
  struct EvLater {
    bool operator()(const Ev& x, const Ev& y) const;
  };

  int group_ordinal(int approach, TurnGroup g) const {
    return approach * 2 + static_cast<int>(g);
  }
  GroupState& group(int approach, TurnGroup g);
  const GroupState& group(int approach, TurnGroup g) const;
  double traversal_s(int approach) const;
  TurnGroup turn_group_at(const Vehicle& v, int route_pos) const;
  bool has_space(int approach, TurnGroup g) const;
  void push_event(double t, EvKind kind, int a, int b, long epoch);
  void log_event(double t, EvKind kind, int vehicle, int node, int approach,
                 int turn, int action);
  void apply_command(int node, const PhaseCommand& cmd);
  void schedule_group_slots(int node, double from_t);
  void handle_decide(const Ev& e);
  void handle_discharge(const Ev& e);
  void handle_arrive(const Ev& e);
  void handle_inject(const Ev& e);
  void handle_sample(const Ev& e);
  void depart_one(int node, int approach, TurnGroup g, double t);
  void forward_vehicle(int veh, double t);
  void release_space(int approach);
  void finish_at_horizon();

  const RoadNetwork& net_;
  MesoParams params_;
  double horizon_;
  double now_ = 0.0;
  SignalController* controller_ = nullptr;
  std::vector<DemandVehicle> demand_;
  std::vector<Vehicle> vehicles_;
  std::vector<GroupState> groups_;  // 2 per approach
  std::vector<NodeState> node_state_;
  std::priority_queue<Ev, std::vector<Ev>, EvLater> events_;
  std::uint64_t seq_ = 0;
  std::vector<std::deque<int>> entry_waiters_;  // per approach, pending inject
  bool log_enabled_ = false;
  std::vector<EvRecord> log_;
  std::vector<DecisionAudit> decisions_;
  long entered_ = 0, exited_ = 0, in_network_ = 0;
  bool ran_ = false;
  // sampling accumulators
  std::vector<double> sample_times_, aql_series_, awt_inst_series_;
  double window_wait_sum_ = 0.0;
  long window_completed_ = 0;
  double completed_wait_sum_ = 0.0, completed_tt_sum_ = 0.0;
  long completed_ = 0;
  // time-averaged incoming queue per node
  std::vector<double> queue_integral_;
  std::vector<int> node_queue_count_;
  double last_integral_t_ = 0.0;
  void advance_queue_integral(double t);
};

}  // namespace tsc
