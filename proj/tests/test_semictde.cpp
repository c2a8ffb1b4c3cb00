#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tsc/semictde.hpp"
#include "tsc/util.hpp"

using namespace tsc;

namespace {

RoadNetwork toy22() {
  GridSpec gs;
  gs.rows = 2;
  gs.cols = 2;
  gs.approach_length_m = 150.0;
  gs.lanes = 2;
  return build_grid_network(gs);  // four signalized tee corners
}

FlowConfig toy_flow(long total = 200, double horizon = 400.0) {
  FlowConfig f;
  f.name = "toy";
  f.shape = FlowShape::Uniform;
  f.total_vehicles = total;
  f.horizon_s = horizon;
  return f;
}

EpisodeSetup toy_setup(const RoadNetwork& net, const RegionPartition& part,
                       ModelKind kind) {
  EpisodeSetup s;
  s.net = &net;
  s.part = &part;
  s.flow = toy_flow();
  s.weights = default_weights(kind);
  return s;
}

std::string agents_bytes(const AgentSet& a) {
  std::string all;
  for (const auto& ag : a.agents) {
    all += params_to_bytes(ag.online);
    all += params_to_bytes(ag.target);
  }
  return all;
}

std::string tmpdir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("tsc_sctde_") + tag);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("state layouts: widths and block bookkeeping") {
  CHECK(state_width(ModelKind::FullyDecentralized) == 17);
  CHECK(state_width(ModelKind::PartiallySemiCtde) == 17);
  CHECK(state_width(ModelKind::RegionWide) == 31);
  CHECK(state_width(ModelKind::OneHop) == 74);
  CHECK_THROWS_AS(state_width(ModelKind::FixedTime), ConfigError);
  CHECK_THROWS_AS(make_layout(ModelKind::Random), ConfigError);

  for (ModelKind k : {ModelKind::FullyDecentralized, ModelKind::PartiallySemiCtde,
                      ModelKind::RegionWide, ModelKind::OneHop}) {
    StateLayout lay = make_layout(k);
    CHECK(lay.width == state_width(k));
    int at = 0;
    for (const auto& b : lay.blocks) {
      CHECK(b.offset == at);
      CHECK(b.width > 0);
      CHECK(!b.name.empty());
      at += b.width;
    }
    CHECK(at == lay.width);
    // descriptor is canonical: stable across calls
    CHECK(lay.descriptor() == make_layout(k).descriptor());
    CHECK(lay.descriptor().find("\"width\"") != std::string::npos);
  }
  CHECK(make_layout(ModelKind::RegionWide).descriptor() !=
        make_layout(ModelKind::OneHop).descriptor());
}

TEST_CASE("admissibility mask: -inf off-mask, q preserved on-mask") {
  std::vector<double> q = {1, -2, 3, -4, 5, -6, 7, -8};
  std::array<bool, kActionCount> adm{};
  adm[1] = adm[6] = true;
  std::vector<double> m = amm_mask(q, adm);
  REQUIRE(m.size() == q.size());
  for (int a = 0; a < 8; ++a) {
    if (adm[a]) {
      CHECK(m[a] == q[a]);
    } else {
      CHECK(std::isinf(m[a]));
      CHECK(m[a] < 0);
    }
  }
  std::array<bool, kActionCount> none{};
  CHECK_THROWS_AS(amm_mask(q, none), SimError);
  CHECK_THROWS_AS(amm_mask(std::vector<double>(5, 0.0), adm), SimError);
}

TEST_CASE("make_agents: one per region, seeded, right input width") {
  RoadNetwork net = toy22();
  RegionPartition singles = singleton_partition(net);
  REQUIRE(singles.region_count() == 4);
  TrainerConfig cfg;
  cfg.memory = 128;

  AgentSet a = make_agents(ModelKind::OneHop, singles, cfg, 42);
  CHECK(a.kind == ModelKind::OneHop);
  REQUIRE(a.agents.size() == 4);
  for (int r = 0; r < 4; ++r) {
    const RegionalAgent& ag = a.for_region(r);
    CHECK(ag.region == r);
    CHECK(ag.online.input_width() == 74);
    CHECK(ag.online.output_width() == kActionCount);
    CHECK(ag.online.bytes_equal(ag.target));
    CHECK(ag.memory->capacity() == 128);
    CHECK(ag.memory->size() == 0);
  }
  // distinct regions get distinct draws; same seed reproduces
  CHECK(a.agents[0].online.param_hash() != a.agents[1].online.param_hash());
  AgentSet b = make_agents(ModelKind::OneHop, singles, cfg, 42);
  AgentSet c = make_agents(ModelKind::OneHop, singles, cfg, 43);
  CHECK(agents_bytes(a) == agents_bytes(b));
  CHECK(agents_bytes(a) != agents_bytes(c));

  AgentSet rw = make_agents(ModelKind::RegionWide, whole_partition(net), cfg, 1);
  REQUIRE(rw.agents.size() == 1);
  CHECK(rw.agents[0].online.input_width() == 31);
}

TEST_CASE("train episode gathers one transition per decision") {
  RoadNetwork net = toy22();
  RegionPartition whole = whole_partition(net);
  TrainerConfig cfg;
  cfg.batch = 8;
  cfg.c_policy = 4;
  cfg.c_target = 50;
  cfg.memory = 4000;

  EpisodeSetup setup = toy_setup(net, whole, ModelKind::RegionWide);
  setup.trainer = cfg;
  AgentSet agents = make_agents(ModelKind::RegionWide, whole, cfg, 7);

  EpisodeResult r = run_episode(setup, agents, EpisodeMode::Train, 0.5, 11);
  // every decision closes exactly one transition: each later decision closes
  // the previous one, and the horizon closes each node's last pending one
  CHECK(r.transitions == long(r.decisions.size()));
  CHECK(r.transitions > 40);
  CHECK(agents.agents[0].memory->size() == std::size_t(r.transitions));
  CHECK(r.train_steps > 0);
  CHECK(agents.agents[0].train_steps == r.train_steps);
  CHECK(r.mean_loss >= 0.0);
  CHECK(agents.agents[0].losses.size() == std::size_t(r.train_steps));
  REQUIRE(r.region_reward_mean.size() == 1);
  CHECK(std::isfinite(r.region_reward_mean[0]));

  // terminal closures are flagged done exactly once per signalized node
  long done = 0;
  const ReplayMemory& mem = *agents.agents[0].memory;
  for (std::size_t i = 0; i < mem.size(); ++i)
    if (mem.at(i).done) ++done;
  CHECK(done == long(net.signalized_ids().size()));

  // stored states have the model width
  for (std::size_t i = 0; i < mem.size(); ++i) {
    CHECK(mem.at(i).s.size() == 31);
    CHECK(mem.at(i).s_next.size() == 31);
  }
}

TEST_CASE("training moves parameters; eval and probe are pure") {
  RoadNetwork net = toy22();
  RegionPartition whole = whole_partition(net);
  TrainerConfig cfg;
  cfg.batch = 8;
  cfg.c_policy = 4;
  cfg.c_target = 100;

  EpisodeSetup setup = toy_setup(net, whole, ModelKind::OneHop);
  setup.trainer = cfg;
  AgentSet agents = make_agents(ModelKind::OneHop, whole, cfg, 3);
  std::string fresh = agents_bytes(agents);

  EpisodeResult ev = run_episode(setup, agents, EpisodeMode::Eval, 0.0, 21);
  CHECK(ev.train_steps == 0);
  CHECK(ev.transitions == 0);
  CHECK(agents.agents[0].memory->size() == 0);
  CHECK(agents_bytes(agents) == fresh);
  CHECK(ev.metrics.completed > 0);

  EpisodeResult pr = run_episode(setup, agents, EpisodeMode::Probe, 0.3, 22);
  CHECK(pr.train_steps == 0);
  CHECK(agents.agents[0].memory->size() == 0);
  CHECK(agents_bytes(agents) == fresh);
  REQUIRE(pr.region_reward_mean.size() == 1);
  CHECK(std::isfinite(pr.region_reward_mean[0]));

  EpisodeResult tr = run_episode(setup, agents, EpisodeMode::Train, 0.8, 23);
  CHECK(tr.train_steps > 0);
  CHECK(agents_bytes(agents) != fresh);

  // decentralized_execute is greedy eval through the const surface
  EpisodeResult dec = decentralized_execute(setup, agents, 31);
  CHECK(dec.train_steps == 0);
  CHECK(dec.metrics.completed > 0);
  EpisodeResult dec2 = decentralized_execute(setup, agents, 31);
  CHECK(dec.metrics.awt == dec2.metrics.awt);
  CHECK(dec.metrics.att == dec2.metrics.att);
}

TEST_CASE("eval under an agent per region with mixed partitions") {
  RoadNetwork net = toy22();
  RegionPartition singles = singleton_partition(net);
  TrainerConfig cfg;
  EpisodeSetup setup = toy_setup(net, singles, ModelKind::FullyDecentralized);
  setup.trainer = cfg;
  AgentSet agents = make_agents(ModelKind::FullyDecentralized, singles, cfg, 9);
  EpisodeResult r = decentralized_execute(setup, agents, 5);
  CHECK(r.metrics.entered > 0);
  REQUIRE(r.region_reward_mean.size() == 4);

  // partition wider than the agent set: rejected
  RegionPartition whole = whole_partition(net);
  AgentSet one = make_agents(ModelKind::FullyDecentralized, whole, cfg, 9);
  EpisodeSetup bad = toy_setup(net, singles, ModelKind::FullyDecentralized);
  bad.trainer = cfg;
  CHECK_THROWS_AS(decentralized_execute(bad, one, 5), SimError);
}

TEST_CASE("identical seeds reproduce the whole training episode") {
  RoadNetwork net = toy22();
  RegionPartition whole = whole_partition(net);
  TrainerConfig cfg;
  cfg.batch = 8;
  cfg.c_policy = 4;

  for (ModelKind kind : {ModelKind::RegionWide, ModelKind::OneHop}) {
    EpisodeSetup setup = toy_setup(net, whole, kind);
    setup.trainer = cfg;
    setup.event_log = true;

    AgentSet a1 = make_agents(kind, whole, cfg, 5);
    AgentSet a2 = make_agents(kind, whole, cfg, 5);
    EpisodeResult r1 = run_episode(setup, a1, EpisodeMode::Train, 0.4, 17);
    EpisodeResult r2 = run_episode(setup, a2, EpisodeMode::Train, 0.4, 17);

    CHECK(event_log_to_csv(r1.event_log) == event_log_to_csv(r2.event_log));
    CHECK(r1.metrics.awt == r2.metrics.awt);
    CHECK(r1.metrics.att == r2.metrics.att);
    CHECK(r1.transitions == r2.transitions);
    CHECK(r1.train_steps == r2.train_steps);
    CHECK(agents_bytes(a1) == agents_bytes(a2));

    AgentSet a3 = make_agents(kind, whole, cfg, 5);
    EpisodeResult r3 = run_episode(setup, a3, EpisodeMode::Train, 0.4, 18);
    CHECK(event_log_to_csv(r1.event_log) != event_log_to_csv(r3.event_log));
  }
}

TEST_CASE("per-region lambda overrides change the regional reward stream") {
  RoadNetwork net = toy22();
  RegionPartition whole = whole_partition(net);
  TrainerConfig cfg;

  EpisodeSetup setup = toy_setup(net, whole, ModelKind::RegionWide);
  setup.trainer = cfg;
  AgentSet agents = make_agents(ModelKind::RegionWide, whole, cfg, 2);

  EpisodeResult base = run_episode(setup, agents, EpisodeMode::Probe, 0.2, 40);

  RewardWeights heavy = setup.weights;
  heavy.lambda_spill = 50.0;
  heavy.lambda_switch = 50.0;
  EpisodeSetup over = setup;
  over.region_weights = {heavy};
  EpisodeResult h = run_episode(over, agents, EpisodeMode::Probe, 0.2, 40);

  // same seed, same policy draws: trajectories agree, rewards differ
  CHECK(h.metrics.awt == base.metrics.awt);
  CHECK(h.region_reward_mean[0] < base.region_reward_mean[0]);
}

TEST_CASE("checkpoint bundles round trip and validate the partition") {
  RoadNetwork net = toy22();
  RegionPartition singles = singleton_partition(net);
  TrainerConfig cfg;
  AgentSet agents = make_agents(ModelKind::PartiallySemiCtde, singles, cfg, 77);

  std::string dir = tmpdir("ckpt");
  save_checkpoint_bundle(dir, agents, singles, "deadbeef");
  AgentSet back = load_checkpoint_bundle(dir, singles);
  CHECK(back.kind == ModelKind::PartiallySemiCtde);
  REQUIRE(back.agents.size() == agents.agents.size());
  for (std::size_t r = 0; r < back.agents.size(); ++r) {
    CHECK(back.agents[r].online.bytes_equal(agents.agents[r].online));
    CHECK(back.agents[r].target.bytes_equal(agents.agents[r].target));
  }

  // bundle is tied to the partition it was trained on
  RegionPartition whole = whole_partition(net);
  CHECK_THROWS_AS(load_checkpoint_bundle(dir, whole), ConfigError);
  CHECK_THROWS_AS(load_checkpoint_bundle(dir + "_missing", singles),
                  ConfigError);

  // saving twice produces byte-identical files
  std::string dir2 = tmpdir("ckpt2");
  save_checkpoint_bundle(dir2, agents, singles, "deadbeef");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    auto other = std::filesystem::path(dir2) / e.path().filename();
    CHECK(read_file(e.path().string()) == read_file(other.string()));
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("tle_encode produces constant widths at a live decision point") {
  RoadNetwork net = toy22();
  RegionPartition whole = whole_partition(net);
  SimCore sim(net, MesoParams{}, 100.0);
  std::vector<RegionObsState> rs(1);
  RewardWeights w = default_weights(ModelKind::RegionWide);
  for (int node : net.signalized_ids()) {
    CHECK(tle_encode(ModelKind::FullyDecentralized, sim, whole, w, node, -1, rs)
              .size() == 17);
    CHECK(tle_encode(ModelKind::PartiallySemiCtde, sim, whole, w, node, 2, rs)
              .size() == 17);
    CHECK(tle_encode(ModelKind::RegionWide, sim, whole, w, node, 0, rs).size() ==
          31);
    CHECK(tle_encode(ModelKind::OneHop, sim, whole, w, node, 7, rs).size() ==
          74);
  }
  // the local block leads for the local/regionwide families
  auto x = tle_encode(ModelKind::RegionWide, sim, whole, w,
                      net.signalized_ids()[0], 5, rs);
  CHECK(x[5] == 1.0);  // phase one-hot
}
