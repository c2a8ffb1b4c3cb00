#include "tsc/regionform.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"
#include "tsc/controllers.hpp"
#include "tsc/util.hpp"

namespace tsc {

double CongestionGraph::sigma_of(int node) const {
  auto it = std::lower_bound(vertices.begin(), vertices.end(), node);
  if (it == vertices.end() || *it != node)
    throw SimError("node not in congestion graph");
  return sigma[static_cast<std::size_t>(it - vertices.begin())];
}

std::vector<double> collect_warmup_congestion(const RoadNetwork& net,
                                              std::vector<DemandVehicle> demand,
                                              double warmup_horizon_s,
                                              const MesoParams& params) {
  SimCore sim(net, params, warmup_horizon_s);
  FixedTimeController ctrl;
  sim.set_controller(&ctrl);
  sim.set_demand(std::move(demand));
  sim.run();
  return sim.mean_incoming_queue();
}

std::vector<double> collect_warmup_congestion(const RoadNetwork& net,
                                              const FlowConfig& flow,
                                              double warmup_horizon_s,
                                              const MesoParams& params,
                                              std::uint64_t seed) {
  return collect_warmup_congestion(net, generate_demand(flow, net, seed),
                                   warmup_horizon_s, params);
}

CongestionGraph build_fuzzy_graph(const std::vector<double>& queue_by_node,
                                  const RoadNetwork& net) {
  if (queue_by_node.size() != net.nodes().size())
    throw ConfigError("congestion vector size mismatch");
  CongestionGraph g;
  g.vertices = net.signalized_ids();
  std::map<int, std::size_t> vidx;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) vidx[g.vertices[i]] = i;

  std::set<std::pair<int, int>> seen;
  for (int u : g.vertices)
    for (int v : net.signalized_downstream(u)) {
      if (v == u) continue;
      if (!seen.insert({u, v}).second) continue;
      CongestionGraph::Edge e;
      e.u = u;
      e.v = v;
      e.weight = queue_by_node[u];
      g.edges.push_back(e);
    }
  std::sort(g.edges.begin(), g.edges.end(), [](const auto& a, const auto& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });

  std::vector<double> in_sum(g.vertices.size(), 0.0);
  std::vector<int> in_cnt(g.vertices.size(), 0);
  for (const auto& e : g.edges) {
    in_sum[vidx[e.v]] += e.weight;
    in_cnt[vidx[e.v]] += 1;
  }
  g.sigma.resize(g.vertices.size());
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    g.sigma[i] = in_cnt[i] > 0 ? in_sum[i] / in_cnt[i] : 0.0;
  for (auto& e : g.edges) {
    double denom = in_sum[vidx[e.v]];
    e.p = denom > 0.0 ? e.weight / denom : 0.0;
    e.membership = std::min(g.sigma[vidx[e.u]], g.sigma[vidx[e.v]]) * e.p;
  }
  return g;
}

namespace {

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

RegionPartition finalize_partition(std::vector<std::vector<int>> regions,
                                   const RoadNetwork& net) {
  for (auto& r : regions) std::sort(r.begin(), r.end());
  std::sort(regions.begin(), regions.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  RegionPartition part;
  part.regions = std::move(regions);
  part.region_of.assign(net.nodes().size(), -1);
  for (std::size_t r = 0; r < part.regions.size(); ++r)
    for (int id : part.regions[r]) {
      if (id < 0 || id >= static_cast<int>(net.nodes().size()) ||
          !net.node(id).signalized)
        throw ConfigError("partition names a non-signalized node");
      if (part.region_of[id] != -1)
        throw ConfigError("partition repeats a node");
      part.region_of[id] = static_cast<int>(r);
    }
  for (int id : net.signalized_ids())
    if (part.region_of[id] == -1)
      throw ConfigError("partition misses a signalized node");
  auto reg = [&](int node) { return node >= 0 ? part.region_of[node] : -1; };
  for (const Approach& ap : net.approaches())
    if (reg(ap.from_node) != reg(ap.to_node))
      part.boundary_approaches.push_back(ap.id);
  return part;
}

}  // namespace

RegionPartition alpha_cut_partition(const CongestionGraph& g, double alpha,
                                    const RoadNetwork& net) {
  std::map<int, int> vidx;
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    vidx[g.vertices[i]] = static_cast<int>(i);
  Dsu dsu(static_cast<int>(g.vertices.size()));
  for (const auto& e : g.edges)
    if (e.membership >= alpha) dsu.unite(vidx.at(e.u), vidx.at(e.v));
  std::map<int, std::vector<int>> comps;
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    comps[dsu.find(static_cast<int>(i))].push_back(g.vertices[i]);
  std::vector<std::vector<int>> regions;
  regions.reserve(comps.size());
  for (auto& [root, ids] : comps) regions.push_back(std::move(ids));
  return finalize_partition(std::move(regions), net);
}

RegionPartition singleton_partition(const RoadNetwork& net) {
  std::vector<std::vector<int>> regions;
  for (int id : net.signalized_ids()) regions.push_back({id});
  return finalize_partition(std::move(regions), net);
}

RegionPartition whole_partition(const RoadNetwork& net) {
  return finalize_partition({net.signalized_ids()}, net);
}

std::string RegionPartition::to_json() const {
  nlohmann::ordered_json j;
  j["boundary_approaches"] = boundary_approaches;
  j["regions"] = regions;
  return j.dump(2) + "\n";
}

std::uint64_t RegionPartition::hash() const { return fnv1a64(to_json()); }

RegionPartition partition_from_json(const std::string& text,
                                    const RoadNetwork& net) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad partition json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("regions") || !j["regions"].is_array())
    throw ConfigError("partition json needs a regions array");
  std::vector<std::vector<int>> regions;
  for (const auto& r : j["regions"]) {
    if (!r.is_array()) throw ConfigError("partition region must be an array");
    std::vector<int> ids;
    for (const auto& v : r) {
      if (!v.is_number_integer())
        throw ConfigError("partition node ids must be integers");
      ids.push_back(v.get<int>());
    }
    if (ids.empty()) throw ConfigError("empty region");
    regions.push_back(std::move(ids));
  }
  return finalize_partition(std::move(regions), net);
}

}  // namespace tsc
