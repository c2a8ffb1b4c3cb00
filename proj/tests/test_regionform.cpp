#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "tsc/regionform.hpp"
#include "tsc/util.hpp"

using namespace tsc;

namespace {

RoadNetwork net33() {
  GridSpec gs;
  gs.rows = 3;
  gs.cols = 3;
  gs.approach_length_m = 20.0;
  gs.signalized = corners_unsignalized(3, 3);
  return build_grid_network(gs);
}

RoadNetwork all_signalized(int rows, int cols) {
  GridSpec gs;
  gs.rows = rows;
  gs.cols = cols;
  gs.approach_length_m = 20.0;
  return build_grid_network(gs);
}

// Brute-force reference: undirected reachability over edges whose
// membership clears the cut.
std::vector<std::vector<int>> oracle_regions(const CongestionGraph& g,
                                             double alpha,
                                             const std::vector<int>& nodes) {
  std::map<int, std::set<int>> adj;
  for (int v : nodes) adj[v];
  for (const auto& e : g.edges)
    if (e.membership >= alpha) {
      adj[e.u].insert(e.v);
      adj[e.v].insert(e.u);
    }
  std::set<int> seen;
  std::vector<std::vector<int>> regions;
  for (int v : nodes) {
    if (seen.count(v)) continue;
    std::vector<int> comp, stack{v};
    seen.insert(v);
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comp.push_back(u);
      for (int w : adj[u])
        if (!seen.count(w)) {
          seen.insert(w);
          stack.push_back(w);
        }
    }
    std::sort(comp.begin(), comp.end());
    regions.push_back(comp);
  }
  std::sort(regions.begin(), regions.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return regions;
}

const CongestionGraph::Edge* find_edge(const CongestionGraph& g, int u, int v) {
  for (const auto& e : g.edges)
    if (e.u == u && e.v == v) return &e;
  return nullptr;
}

}  // namespace

TEST_CASE("fuzzy graph on the 3x3 fixture: weights, sigma, membership") {
  RoadNetwork net = net33();
  // node ids: (0,1)=1 (1,0)=3 (1,1)=4 (1,2)=5 (2,1)=7
  std::vector<double> q(9, 0.0);
  q[1] = 3;
  q[3] = 6;
  q[4] = 12;
  q[5] = 0;
  q[7] = 9;

  CongestionGraph g = build_fuzzy_graph(q, net);
  CHECK(g.vertices == std::vector<int>{1, 3, 4, 5, 7});
  CHECK(g.edges.size() == 16);  // 3+3+4+3+3 directed neighbor links

  CHECK(g.sigma_of(1) == doctest::Approx(6.0));    // (6+12+0)/3
  CHECK(g.sigma_of(3) == doctest::Approx(8.0));    // (3+12+9)/3
  CHECK(g.sigma_of(4) == doctest::Approx(4.5));    // (3+6+0+9)/4
  CHECK(g.sigma_of(7) == doctest::Approx(6.0));

  const auto* e41 = find_edge(g, 4, 1);
  REQUIRE(e41);
  CHECK(e41->weight == doctest::Approx(12.0));
  CHECK(e41->p == doctest::Approx(12.0 / 18.0));
  CHECK(e41->membership == doctest::Approx(3.0));  // min(4.5, 6) * 2/3

  const auto* e34 = find_edge(g, 3, 4);
  REQUIRE(e34);
  CHECK(e34->p == doctest::Approx(6.0 / 18.0));
  CHECK(e34->membership == doctest::Approx(1.5));  // min(8, 4.5) / 3

  const auto* e51 = find_edge(g, 5, 1);
  REQUIRE(e51);
  CHECK(e51->weight == 0.0);
  CHECK(e51->p == 0.0);
  CHECK(e51->membership == 0.0);
}

TEST_CASE("alpha cuts of the fixture: hand-computed components") {
  RoadNetwork net = net33();
  std::vector<double> q(9, 0.0);
  q[1] = 3;
  q[3] = 6;
  q[4] = 12;
  q[5] = 0;
  q[7] = 9;
  CongestionGraph g = build_fuzzy_graph(q, net);

  RegionPartition p0 = alpha_cut_partition(g, 0.0, net);
  CHECK(p0.regions == std::vector<std::vector<int>>{{1, 3, 4, 5, 7}});

  RegionPartition p2 = alpha_cut_partition(g, 2.0, net);
  CHECK(p2.regions == std::vector<std::vector<int>>{{1, 3, 4, 5, 7}});

  RegionPartition p26 = alpha_cut_partition(g, 2.6, net);
  CHECK(p26.regions ==
        std::vector<std::vector<int>>{{1, 4, 7}, {3}, {5}});
  CHECK(p26.region_of[1] == 0);
  CHECK(p26.region_of[4] == 0);
  CHECK(p26.region_of[3] == 1);
  CHECK(p26.region_of[5] == 2);
  CHECK(p26.region_of[0] == -1);  // unsignalized corner

  RegionPartition pbig = alpha_cut_partition(g, 10.0, net);
  CHECK(pbig.region_count() == 5);
  for (const auto& r : pbig.regions) CHECK(r.size() == 1);
}

TEST_CASE("alpha cut matches the reachability oracle on 500 random graphs") {
  RoadNetwork net = all_signalized(4, 5);  // 20 signalized nodes
  const std::vector<int>& ids = net.signalized_ids();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mu(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(ids.size()) - 1);

  for (int trial = 0; trial < 500; ++trial) {
    CongestionGraph g;
    g.vertices = ids;
    g.sigma.assign(ids.size(), 0.0);
    int nedges = 1 + static_cast<int>(rng() % 60);
    std::set<std::pair<int, int>> used;
    for (int i = 0; i < nedges; ++i) {
      int u = ids[pick(rng)], v = ids[pick(rng)];
      if (u == v || used.count({u, v})) continue;
      used.insert({u, v});
      g.edges.push_back({u, v, 0.0, 0.0, mu(rng)});
    }
    double a1 = mu(rng), a2 = mu(rng);
    if (a1 > a2) std::swap(a1, a2);

    RegionPartition p1 = alpha_cut_partition(g, a1, net);
    RegionPartition p2 = alpha_cut_partition(g, a2, net);
    CHECK(p1.regions == oracle_regions(g, a1, ids));
    CHECK(p2.regions == oracle_regions(g, a2, ids));

    // monotone refinement: each region at the higher cut sits inside one
    // region of the lower cut
    for (const auto& r : p2.regions) {
      int host = p1.region_of[r.front()];
      for (int member : r) CHECK(p1.region_of[member] == host);
    }
  }
}

TEST_CASE("partition JSON round trip is byte identical") {
  RoadNetwork net = net33();
  std::vector<double> q(9, 1.0);
  q[4] = 5.0;
  CongestionGraph g = build_fuzzy_graph(q, net);
  RegionPartition p = alpha_cut_partition(g, 0.5, net);

  std::string text = p.to_json();
  RegionPartition back = partition_from_json(text, net);
  CHECK(back.to_json() == text);
  CHECK(back.regions == p.regions);
  CHECK(back.region_of == p.region_of);
  CHECK(back.boundary_approaches == p.boundary_approaches);
  CHECK(back.hash() == p.hash());
}

TEST_CASE("partition JSON rejects malformed input") {
  RoadNetwork net = net33();
  CHECK_THROWS_AS(partition_from_json("not json", net), ConfigError);
  CHECK_THROWS_AS(partition_from_json("{\"regions\":[[0]]}", net),
                  ConfigError);  // node 0 is unsignalized
  CHECK_THROWS_AS(partition_from_json("{\"regions\":[[1],[1,4]]}", net),
                  ConfigError);  // repeated member
  CHECK_THROWS_AS(partition_from_json("{\"regions\":[[1]]}", net),
                  ConfigError);  // nodes missing
}

TEST_CASE("singleton and whole partitions") {
  RoadNetwork net = net33();
  RegionPartition s = singleton_partition(net);
  CHECK(s.region_count() == 5);
  for (const auto& r : s.regions) CHECK(r.size() == 1);

  RegionPartition w = whole_partition(net);
  CHECK(w.region_count() == 1);
  CHECK(w.regions[0] == std::vector<int>{1, 3, 4, 5, 7});

  // whole: only the corner-adjacent internal links cross a region border
  // (4 corners x 2 neighbors x 2 directions); entry/exit links connect two
  // out-of-region endpoints and do not count
  CHECK(w.boundary_approaches.size() == 16);
  // singletons add the 8 directed links between adjacent signalized nodes
  CHECK(s.boundary_approaches.size() == 24);
  for (int ap : w.boundary_approaches) {
    const Approach& a = net.approach(ap);
    bool from_in = a.from_node >= 0 && w.region_of[a.from_node] >= 0;
    bool to_in = a.to_node >= 0 && w.region_of[a.to_node] >= 0;
    CHECK(from_in != to_in);
  }
}

TEST_CASE("warm-up congestion: deterministic, loaded corridors rank higher") {
  RoadNetwork net = net33();
  FlowConfig flow{"u", FlowShape::Uniform, 400, 0.7, 600.0};
  MesoParams mp;
  mp.free_speed_mps = 10.0;
  std::vector<double> a = collect_warmup_congestion(net, flow, 600.0, mp, 5);
  std::vector<double> b = collect_warmup_congestion(net, flow, 600.0, mp, 5);
  CHECK(a == b);
  REQUIRE(a.size() == net.nodes().size());
  double total = 0.0;
  for (int id : net.signalized_ids()) {
    CHECK(a[id] >= 0.0);
    total += a[id];
  }
  CHECK(total > 0.0);  // this demand does queue somewhere

  // scripted overload of one corridor dominates the quiet rest
  std::vector<DemandVehicle> demand;
  for (int i = 0; i < 120; ++i) {
    DemandVehicle v;
    v.entry_time = 0.25 * i;
    v.route = {net.node(net.node_at(0, 0)).in_approach[0],
               net.node(net.node_at(1, 0)).in_approach[0],
               net.node(net.node_at(2, 0)).in_approach[0],
               net.node(net.node_at(2, 0)).out_approach[2]};
    demand.push_back(v);
  }
  std::vector<double> c =
      collect_warmup_congestion(net, demand, 300.0, mp);
  CHECK(c[net.node_at(1, 0)] > c[net.node_at(1, 2)]);
}
