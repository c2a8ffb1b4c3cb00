#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsc {

// ---------------------------------------------------------------------------
// Geometry vocabulary
// ---------------------------------------------------------------------------

/// Cardinal side of a leg as seen from its intersection. An approach "on the
/// north side" carries vehicles traveling southbound into the node.
enum class Side : int { North = 0, East = 1, South = 2, West = 3 };

constexpr std::array<Side, 4> kSides = {Side::North, Side::East, Side::South,
                                        Side::West};

Side opposite(Side s);
/// Exit side for a left (resp. right) turn given the travel heading.
Side left_exit(Side heading);
Side right_exit(Side heading);
/// Heading of a vehicle entering on the given approach side.
Side heading_from(Side approach_side);
bool is_vertical(Side s);
const char* to_string(Side s);

enum class TurnGroup : int { Through = 0, Left = 1 };
const char* to_string(TurnGroup t);

// ---------------------------------------------------------------------------
// Phase actions
// ---------------------------------------------------------------------------

enum class PhaseLogic : int { NS_S = 0, NS_L = 1, EW_S = 2, EW_L = 3 };
enum class GreenLength : int { Short = 0, Long = 1 };
const char* to_string(PhaseLogic l);

struct PhaseAction {
  PhaseLogic logic = PhaseLogic::NS_S;
  GreenLength length = GreenLength::Short;
  bool operator==(const PhaseAction&) const = default;
};

/// The global action vocabulary: 4 phase logics x 2 green durations.
constexpr int kActionCount = 8;
int action_index(PhaseAction a);
PhaseAction action_from_index(int idx);

struct SignalTiming {
  double g_short = 5.0;
  double g_long = 15.0;
  double clearance = 3.0;
};

double green_seconds(const SignalTiming& t, PhaseAction a);
/// Clearance inserted before the next green: 0 when the logic is unchanged
/// or there is no previous phase, else the full clearance interval.
double clearance_cost(const SignalTiming& t, std::optional<PhaseLogic> prev,
                      PhaseLogic next);

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

/// Enumerator order matches the spatial one-hot encoding:
/// [west, east, south, north blocked, 4-way].
enum class TopologyKind : int {
  TWestBlocked = 0,
  TEastBlocked = 1,
  TSouthBlocked = 2,
  TNorthBlocked = 3,
  Cross4 = 4
};
const char* to_string(TopologyKind k);
std::optional<Side> blocked_side(TopologyKind k);
TopologyKind topology_from_legs(const std::array<bool, 4>& has_leg);

/// Actions whose served lane groups all physically exist at the topology,
/// as sorted global action indices. Both durations of a feasible logic.
std::vector<int> admissible_actions(TopologyKind k);
std::array<bool, kActionCount> admissible_mask(TopologyKind k);
bool logic_admissible(TopologyKind k, PhaseLogic l);

/// Lane groups receiving green under a logic at a topology. Cross4 follows
/// the standard concurrency table (opposing through pairs, opposing left
/// pairs). At a T-variant the stem approach (opposite the missing leg) is
/// folded in: its through group runs with the admissible through logic, its
/// left group with the admissible left logic. Empty if the logic is
/// inadmissible there.
std::vector<std::pair<Side, TurnGroup>> served_groups(TopologyKind k,
                                                      PhaseLogic l);

// ---------------------------------------------------------------------------
// Road network
// ---------------------------------------------------------------------------

/// Directed link. from_node < 0 marks a boundary entry (virtual source),
/// to_node < 0 a boundary exit (virtual sink).
struct Approach {
  int id = -1;
  int from_node = -1;
  int to_node = -1;
  /// Leg side at the downstream node (entry/internal links) or, for exit
  /// links, the boundary side at the upstream node.
  Side side = Side::North;
  double length_m = 0.0;
  int lanes = 1;

  bool is_entry() const { return from_node < 0; }
  bool is_exit() const { return to_node < 0; }
  int group_lanes(TurnGroup g) const;
};

struct Intersection {
  int id = -1;
  int row = 0;
  int col = 0;
  TopologyKind topology = TopologyKind::Cross4;
  bool signalized = true;
  std::array<int, 4> in_approach = {-1, -1, -1, -1};   // indexed by Side
  std::array<int, 4> out_approach = {-1, -1, -1, -1};  // indexed by Side
  bool has_leg(Side s) const { return in_approach[static_cast<int>(s)] >= 0; }
};

struct GridSpec {
  int rows = 5;
  int cols = 5;
  double approach_length_m = 470.0;
  int lanes = 3;
  /// Per-node signalized flags, row-major; empty means "all signalized".
  std::vector<std::uint8_t> signalized;
  SignalTiming timing;
};

/// One signalized flag vector with the four grid corners unsignalized.
std::vector<std::uint8_t> corners_unsignalized(int rows, int cols);

class RoadNetwork {
 public:
  const std::vector<Intersection>& nodes() const { return nodes_; }
  const std::vector<Approach>& approaches() const { return approaches_; }
  const Intersection& node(int id) const { return nodes_.at(id); }
  const Approach& approach(int id) const { return approaches_.at(id); }
  const SignalTiming& timing() const { return timing_; }

  int node_at(int row, int col) const;
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  /// Adjacent grid node reached through the leg on `s`, -1 if none (absent
  /// leg or boundary leg).
  int grid_neighbor(int node, Side s) const;
  const std::vector<int>& signalized_ids() const { return signalized_ids_; }
  const std::vector<int>& entry_approaches() const { return entries_; }
  const std::vector<int>& exit_approaches() const { return exits_; }

  const std::vector<int>& admissible(int node) const;
  std::array<bool, kActionCount> mask(int node) const;
  const std::vector<std::pair<Side, TurnGroup>>& served(int node,
                                                        PhaseLogic l) const;

  /// Signalized nodes reachable downstream of `node` through zero or more
  /// unsignalized pass-through nodes (used by the congestion graph).
  std::vector<int> signalized_downstream(int node) const;

  friend RoadNetwork build_grid_network(const GridSpec& spec);

 private:
  int rows_ = 0, cols_ = 0;
  SignalTiming timing_;
  std::vector<Intersection> nodes_;
  std::vector<Approach> approaches_;
  std::vector<int> signalized_ids_;
  std::vector<int> entries_, exits_;
  std::vector<std::vector<int>> admissible_;               // per node
  std::vector<std::array<std::vector<std::pair<Side, TurnGroup>>, 4>> served_;
};

/// Build a rows x cols lattice. Interior nodes are 4-way; non-corner
/// perimeter nodes lack their outward leg (T-variants); each corner carries
/// exactly one boundary leg on its vertical missing side, attached to a
/// virtual source/sink pair. Throws ConfigError for rows or cols < 2.
RoadNetwork build_grid_network(const GridSpec& spec);

}  // namespace tsc
