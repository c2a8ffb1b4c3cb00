#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/mesosim.hpp"
#include "tsc/netmodel.hpp"

namespace tsc {

/// Directed congestion graph over signalized intersections. Edge u->v exists
/// when v is a signalized downstream neighbor of u (unsignalized nodes are
/// pass-through). Edge weight c(u,v) is the upstream congestion measure
/// queue(u); sigma(v) averages the incoming weights; p(u,v) normalizes
/// c(u,v) over the incoming weights of v; membership
/// mu(u,v) = min(sigma(u), sigma(v)) * p(u,v).
struct CongestionGraph {
  struct Edge {
    int u = -1, v = -1;
    double weight = 0.0;
    double p = 0.0;
    double membership = 0.0;
  };
  std::vector<int> vertices;  // signalized node ids, ascending
  std::vector<double> sigma;  // parallel to vertices
  std::vector<Edge> edges;

  double sigma_of(int node) const;
};

/// Time-averaged total incoming queue per node collected from a warm-up run
/// under fixed-time round-robin control.
std::vector<double> collect_warmup_congestion(const RoadNetwork& net,
                                              const FlowConfig& flow,
                                              double warmup_horizon_s,
                                              const MesoParams& params,
                                              std::uint64_t seed);
/// Same, over explicitly supplied demand (scripted scenarios).
std::vector<double> collect_warmup_congestion(const RoadNetwork& net,
                                              std::vector<DemandVehicle> demand,
                                              double warmup_horizon_s,
                                              const MesoParams& params);

CongestionGraph build_fuzzy_graph(const std::vector<double>& queue_by_node,
                                  const RoadNetwork& net);

struct RegionPartition {
  std::vector<std::vector<int>> regions;  // sorted ids, regions by min id
  std::vector<int> region_of;             // per node id, -1 if unsignalized
  std::vector<int> boundary_approaches;   // sorted approach ids

  int region_count() const { return static_cast<int>(regions.size()); }
  std::string to_json() const;           // canonical, byte-stable
  std::uint64_t hash() const;
};

/// Keep edges with membership >= alpha, drop direction, split into connected
/// components. Intersections with no surviving edge become singletons.
RegionPartition alpha_cut_partition(const CongestionGraph& g, double alpha,
                                    const RoadNetwork& net);

/// One region per signalized intersection.
RegionPartition singleton_partition(const RoadNetwork& net);
/// All signalized intersections in one region.
RegionPartition whole_partition(const RoadNetwork& net);

RegionPartition partition_from_json(const std::string& text,
                                    const RoadNetwork& net);

}  // namespace tsc
