#include "tsc/netmodel.hpp"

#include <algorithm>

#include "tsc/util.hpp"

namespace tsc {

Side opposite(Side s) {
  switch (s) {
    case Side::North: return Side::South;
    case Side::East: return Side::West;
    case Side::South: return Side::North;
    case Side::West: return Side::East;
  }
  return Side::North;
}

Side heading_from(Side approach_side) { return opposite(approach_side); }

Side left_exit(Side heading) {
  switch (heading) {
    case Side::North: return Side::West;
    case Side::West: return Side::South;
    case Side::South: return Side::East;
    case Side::East: return Side::North;
  }
  return Side::North;
}

Side right_exit(Side heading) { return opposite(left_exit(heading)); }

bool is_vertical(Side s) { return s == Side::North || s == Side::South; }

const char* to_string(Side s) {
  switch (s) {
    case Side::North: return "N";
    case Side::East: return "E";
    case Side::South: return "S";
    case Side::West: return "W";
  }
  return "?";
}

const char* to_string(TurnGroup t) {
  return t == TurnGroup::Through ? "through" : "left";
}

const char* to_string(PhaseLogic l) {
  switch (l) {
    case PhaseLogic::NS_S: return "NS_S";
    case PhaseLogic::NS_L: return "NS_L";
    case PhaseLogic::EW_S: return "EW_S";
    case PhaseLogic::EW_L: return "EW_L";
  }
  return "?";
}

int action_index(PhaseAction a) {
  return static_cast<int>(a.logic) * 2 + static_cast<int>(a.length);
}

PhaseAction action_from_index(int idx) {
  if (idx < 0 || idx >= kActionCount) throw SimError("bad action index");
  return {static_cast<PhaseLogic>(idx / 2), static_cast<GreenLength>(idx % 2)};
}

double green_seconds(const SignalTiming& t, PhaseAction a) {
  return a.length == GreenLength::Short ? t.g_short : t.g_long;
}

double clearance_cost(const SignalTiming& t, std::optional<PhaseLogic> prev,
                      PhaseLogic next) {
  if (!prev.has_value() || *prev == next) return 0.0;
  return t.clearance;
}

const char* to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::TWestBlocked: return "TWestBlocked";
    case TopologyKind::TEastBlocked: return "TEastBlocked";
    case TopologyKind::TSouthBlocked: return "TSouthBlocked";
    case TopologyKind::TNorthBlocked: return "TNorthBlocked";
    case TopologyKind::Cross4: return "Cross4";
  }
  return "?";
}

std::optional<Side> blocked_side(TopologyKind k) {
  switch (k) {
    case TopologyKind::TWestBlocked: return Side::West;
    case TopologyKind::TEastBlocked: return Side::East;
    case TopologyKind::TSouthBlocked: return Side::South;
    case TopologyKind::TNorthBlocked: return Side::North;
    case TopologyKind::Cross4: return std::nullopt;
  }
  return std::nullopt;
}

TopologyKind topology_from_legs(const std::array<bool, 4>& has_leg) {
  int missing = 0, missing_idx = -1;
  for (int i = 0; i < 4; ++i)
    if (!has_leg[i]) {
      ++missing;
      missing_idx = i;
    }
  if (missing == 0) return TopologyKind::Cross4;
  if (missing != 1) throw SimError("unsupported leg configuration");
  switch (static_cast<Side>(missing_idx)) {
    case Side::West: return TopologyKind::TWestBlocked;
    case Side::East: return TopologyKind::TEastBlocked;
    case Side::South: return TopologyKind::TSouthBlocked;
    case Side::North: return TopologyKind::TNorthBlocked;
  }
  throw SimError("unreachable");
}

bool logic_admissible(TopologyKind k, PhaseLogic l) {
  auto blocked = blocked_side(k);
  if (!blocked) return true;
  bool vertical_logic = (l == PhaseLogic::NS_S || l == PhaseLogic::NS_L);
  // A logic is admissible iff every lane group it serves by the concurrency
  // table exists, i.e. both approaches of its axis are present.
  return vertical_logic != is_vertical(*blocked);
}

std::vector<int> admissible_actions(TopologyKind k) {
  std::vector<int> out;
  for (int idx = 0; idx < kActionCount; ++idx)
    if (logic_admissible(k, action_from_index(idx).logic)) out.push_back(idx);
  return out;
}

std::array<bool, kActionCount> admissible_mask(TopologyKind k) {
  std::array<bool, kActionCount> m{};
  for (int idx : admissible_actions(k)) m[idx] = true;
  return m;
}

std::vector<std::pair<Side, TurnGroup>> served_groups(TopologyKind k,
                                                      PhaseLogic l) {
  if (!logic_admissible(k, l)) return {};
  bool vertical_logic = (l == PhaseLogic::NS_S || l == PhaseLogic::NS_L);
  TurnGroup g = (l == PhaseLogic::NS_S || l == PhaseLogic::EW_S)
                    ? TurnGroup::Through
                    : TurnGroup::Left;
  std::vector<std::pair<Side, TurnGroup>> out;
  for (Side s : kSides)
    if (is_vertical(s) == vertical_logic) out.emplace_back(s, g);
  // Fold the stem of a T-intersection into the cross-axis logics so that
  // every physically present lane group receives green in some phase.
  if (auto blocked = blocked_side(k)) out.emplace_back(opposite(*blocked), g);
  std::sort(out.begin(), out.end());
  return out;
}

int Approach::group_lanes(TurnGroup g) const {
  if (g == TurnGroup::Left) return 1;
  return std::max(1, lanes - 1);
}

std::vector<std::uint8_t> corners_unsignalized(int rows, int cols) {
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(rows) * cols, 1);
  auto off = [&](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };
  flags[off(0, 0)] = flags[off(0, cols - 1)] = 0;
  flags[off(rows - 1, 0)] = flags[off(rows - 1, cols - 1)] = 0;
  return flags;
}

int RoadNetwork::node_at(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
    throw SimError("node_at out of range");
  return row * cols_ + col;
}

int RoadNetwork::grid_neighbor(int node, Side s) const {
  const Intersection& n = nodes_.at(node);
  int r = n.row, c = n.col;
  switch (s) {
    case Side::North: r -= 1; break;
    case Side::South: r += 1; break;
    case Side::East: c += 1; break;
    case Side::West: c -= 1; break;
  }
  if (r < 0 || r >= rows_ || c < 0 || c >= cols_) return -1;
  if (!n.has_leg(s)) return -1;
  return r * cols_ + c;
}

const std::vector<int>& RoadNetwork::admissible(int node) const {
  return admissible_.at(node);
}

std::array<bool, kActionCount> RoadNetwork::mask(int node) const {
  std::array<bool, kActionCount> m{};
  for (int idx : admissible_.at(node)) m[idx] = true;
  return m;
}

const std::vector<std::pair<Side, TurnGroup>>& RoadNetwork::served(
    int node, PhaseLogic l) const {
  return served_.at(node)[static_cast<int>(l)];
}

std::vector<int> RoadNetwork::signalized_downstream(int node) const {
  std::vector<int> out;
  std::vector<int> stack;
  std::vector<char> seen(nodes_.size(), 0);
  seen[node] = 1;
  for (Side s : kSides) {
    int nb = grid_neighbor(node, s);
    if (nb >= 0) stack.push_back(nb);
  }
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    if (nodes_[v].signalized) {
      out.push_back(v);
      continue;  // pass-through only applies to unsignalized nodes
    }
    for (Side s : kSides) {
      int nb = grid_neighbor(v, s);
      if (nb >= 0 && !seen[nb]) stack.push_back(nb);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

RoadNetwork build_grid_network(const GridSpec& spec) {
  if (spec.rows < 2 || spec.cols < 2)
    throw ConfigError("grid needs rows >= 2 and cols >= 2");
  if (spec.lanes < 1) throw ConfigError("lanes must be >= 1");
  if (spec.approach_length_m <= 0) throw ConfigError("approach length must be > 0");
  if (!spec.signalized.empty() &&
      spec.signalized.size() != static_cast<std::size_t>(spec.rows) * spec.cols)
    throw ConfigError("signalized flag vector size mismatch");

  RoadNetwork net;
  net.rows_ = spec.rows;
  net.cols_ = spec.cols;
  net.timing_ = spec.timing;
  int n_nodes = spec.rows * spec.cols;
  net.nodes_.resize(n_nodes);

  auto is_corner = [&](int r, int c) {
    return (r == 0 || r == spec.rows - 1) && (c == 0 || c == spec.cols - 1);
  };

  // Leg map: neighbor legs everywhere; one vertical boundary leg per corner.
  std::vector<std::array<bool, 4>> legs(n_nodes, {false, false, false, false});
  std::vector<std::array<bool, 4>> boundary(n_nodes, {false, false, false, false});
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      int id = r * spec.cols + c;
      auto& l = legs[id];
      l[static_cast<int>(Side::North)] = r > 0;
      l[static_cast<int>(Side::South)] = r < spec.rows - 1;
      l[static_cast<int>(Side::West)] = c > 0;
      l[static_cast<int>(Side::East)] = c < spec.cols - 1;
      if (is_corner(r, c)) {
        Side b = (r == 0) ? Side::North : Side::South;
        l[static_cast<int>(b)] = true;
        boundary[id][static_cast<int>(b)] = true;
      }
    }

  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      int id = r * spec.cols + c;
      Intersection& node = net.nodes_[id];
      node.id = id;
      node.row = r;
      node.col = c;
      node.topology = topology_from_legs(legs[id]);
      node.signalized = spec.signalized.empty() ? true : spec.signalized[id] != 0;
      if (node.signalized) net.signalized_ids_.push_back(id);
    }

  auto add_approach = [&](int from, int to, Side side) {
    Approach a;
    a.id = static_cast<int>(net.approaches_.size());
    a.from_node = from;
    a.to_node = to;
    a.side = side;
    a.length_m = spec.approach_length_m;
    a.lanes = spec.lanes;
    net.approaches_.push_back(a);
    return a.id;
  };

  // Internal links: for each adjacent pair, both directions. Scan in node id
  // order, south and east legs only, so approach ids are deterministic.
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      int id = r * spec.cols + c;
      if (legs[id][static_cast<int>(Side::South)] && r + 1 < spec.rows) {
        int other = (r + 1) * spec.cols + c;
        // into `other` on its north side; into `id` on its south side
        int down = add_approach(id, other, Side::North);
        int up = add_approach(other, id, Side::South);
        net.nodes_[other].in_approach[static_cast<int>(Side::North)] = down;
        net.nodes_[id].out_approach[static_cast<int>(Side::South)] = down;
        net.nodes_[id].in_approach[static_cast<int>(Side::South)] = up;
        net.nodes_[other].out_approach[static_cast<int>(Side::North)] = up;
      }
      if (legs[id][static_cast<int>(Side::East)] && c + 1 < spec.cols) {
        int other = r * spec.cols + c + 1;
        int east = add_approach(id, other, Side::West);
        int west = add_approach(other, id, Side::East);
        net.nodes_[other].in_approach[static_cast<int>(Side::West)] = east;
        net.nodes_[id].out_approach[static_cast<int>(Side::East)] = east;
        net.nodes_[id].in_approach[static_cast<int>(Side::East)] = west;
        net.nodes_[other].out_approach[static_cast<int>(Side::West)] = west;
      }
    }

  // Boundary legs: an entry (source -> node) and an exit (node -> sink).
  for (int id = 0; id < n_nodes; ++id)
    for (Side s : kSides) {
      if (!boundary[id][static_cast<int>(s)]) continue;
      int entry = add_approach(-1, id, s);
      int exit = add_approach(id, -1, s);
      net.nodes_[id].in_approach[static_cast<int>(s)] = entry;
      net.nodes_[id].out_approach[static_cast<int>(s)] = exit;
      net.entries_.push_back(entry);
      net.exits_.push_back(exit);
    }

  net.admissible_.resize(n_nodes);
  net.served_.resize(n_nodes);
  for (int id = 0; id < n_nodes; ++id) {
    net.admissible_[id] = admissible_actions(net.nodes_[id].topology);
    for (int l = 0; l < 4; ++l) {
      auto groups =
          served_groups(net.nodes_[id].topology, static_cast<PhaseLogic>(l));
      // keep only sides with an actual incoming approach
      std::vector<std::pair<Side, TurnGroup>> present;
      for (auto& [side, turn] : groups)
        if (net.nodes_[id].in_approach[static_cast<int>(side)] >= 0)
          present.emplace_back(side, turn);
      net.served_[id][l] = std::move(present);
    }
  }
  return net;
}

}  // namespace tsc
