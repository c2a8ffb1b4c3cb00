#include "tsc/semictde.hpp"

#include <algorithm>
#include <filesystem>
#include <limits>

#include "json.hpp"
#include "tsc/util.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Layouts and encoders
// ---------------------------------------------------------------------------

static const char* tag_of(ModelKind kind) {
  for (const auto& m : all_models())
    if (m.kind == kind) return m.tag.c_str();
  throw ConfigError("unknown model kind");
}

StateLayout make_layout(ModelKind kind) {
  StateLayout lay;
  auto add = [&lay](const std::string& name, int width) {
    lay.blocks.push_back({name, lay.width, width});
    lay.width += width;
  };
  switch (kind) {
    case ModelKind::FullyDecentralized:
    case ModelKind::PartiallySemiCtde:
      add("local_phase", 8);
      add("local_throughput", 4);
      add("local_spatial", 5);
      break;
    case ModelKind::RegionWide:
      add("local_phase", 8);
      add("local_throughput", 4);
      add("local_spatial", 5);
      add("region_phase_proportions", 4);
      add("region_mean_queues", 4);
      add("region_spillback", 1);
      add("region_exchange", 1);
      add("region_boundary_dirs", 4);
      break;
    case ModelKind::OneHop:
      add("neighbor_north", kOneHopSlot);
      add("neighbor_east", kOneHopSlot);
      add("neighbor_south", kOneHopSlot);
      add("neighbor_west", kOneHopSlot);
      add("own_advancing", 2);
      break;
    default:
      throw ConfigError("rule-based model has no state layout");
  }
  return lay;
}

int state_width(ModelKind kind) {
  switch (kind) {
    case ModelKind::FullyDecentralized:
    case ModelKind::PartiallySemiCtde:
      return kLocalWidth;
    case ModelKind::RegionWide:
      return kRegionWideWidth;
    case ModelKind::OneHop:
      return kOneHopWidth;
    default:
      throw ConfigError("rule-based model has no state width");
  }
}

std::string StateLayout::descriptor() const {
  nlohmann::ordered_json j;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : blocks)
    j["blocks"].push_back(
        {{"name", b.name}, {"offset", b.offset}, {"width", b.width}});
  j["width"] = width;
  return j.dump();
}

std::vector<double> tle_encode(ModelKind kind, const SimCore& sim,
                               const RegionPartition& part,
                               const RewardWeights& w, int node,
                               int phase_action_or_minus1,
                               std::vector<RegionObsState>& region_state) {
  switch (kind) {
    case ModelKind::FullyDecentralized:
    case ModelKind::PartiallySemiCtde:
      return local_state(sim.observe_lane_metrics(node), phase_action_or_minus1,
                         sim.net().node(node).topology);
    case ModelKind::RegionWide: {
      int r = part.region_of[node];
      RegionSnapshot snap = observe_region(sim, part, r, w, region_state[r]);
      std::vector<double> x =
          local_state(sim.observe_lane_metrics(node), phase_action_or_minus1,
                      sim.net().node(node).topology);
      std::vector<double> reg = regionwide_regional_state(snap, sim, part, node);
      x.insert(x.end(), reg.begin(), reg.end());
      return x;
    }
    case ModelKind::OneHop:
      return onehop_regional_state(sim, part, node);
    default:
      throw ConfigError("rule-based model cannot be encoded");
  }
}

std::vector<double> amm_mask(const std::vector<double>& q,
                             const std::array<bool, kActionCount>& admissible) {
  if (static_cast<int>(q.size()) != kActionCount)
    throw SimError("q-vector width mismatch");
  bool any = false;
  for (bool b : admissible) any = any || b;
  if (!any) throw SimError("empty admissible set");
  std::vector<double> out(q);
  for (int i = 0; i < kActionCount; ++i)
    if (!admissible[i]) out[i] = -std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

RegionalAgent& AgentSet::for_region(int r) {
  if (r < 0 || r >= static_cast<int>(agents.size()) || agents[r].region != r)
    throw SimError("no agent for region " + std::to_string(r));
  return agents[r];
}
const RegionalAgent& AgentSet::for_region(int r) const {
  if (r < 0 || r >= static_cast<int>(agents.size()) || agents[r].region != r)
    throw SimError("no agent for region " + std::to_string(r));
  return agents[r];
}

AgentSet make_agents(ModelKind kind, const RegionPartition& part,
                     const TrainerConfig& cfg, std::uint64_t seed) {
  int width = state_width(kind);
  if (width <= 0) throw ConfigError("model is not learned");
  AgentSet set;
  set.kind = kind;
  set.agents.resize(part.region_count());
  for (int r = 0; r < part.region_count(); ++r) {
    RegionalAgent& a = set.agents[r];
    a.region = r;
    a.online = Mlp(qnet_sizes(width));
    auto rng = make_rng(seed, 0xa6e57000u + static_cast<std::uint64_t>(r));
    a.online.init_he_uniform(rng);
    a.target = a.online;
    a.adam.init_like(a.online);
    a.memory = std::make_unique<ReplayMemory>(cfg.memory);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Episode runner
// ---------------------------------------------------------------------------

namespace {

struct PendingTransition {
  std::vector<double> s;
  int action = -1;
  bool valid = false;
};

class AgentController : public SignalController {
 public:
  AgentController(const EpisodeSetup& setup, AgentSet& agents, EpisodeMode mode,
                  double eps, std::uint64_t seed)
      : setup_(setup), agents_(agents), mode_(mode), eps_(eps), seed_(seed) {
    int width = state_width(agents_.kind);
    for (const auto& a : agents_.agents) {
      if (a.online.sizes().empty() || a.online.input_width() != width)
        throw SimError("agent network does not match the model layout");
      if (!a.online.same_shape(a.target))
        throw SimError("online/target shape mismatch");
    }
    if (static_cast<int>(agents_.agents.size()) != setup_.part->region_count())
      throw SimError("agent set does not cover the partition");
    if (!setup_.region_weights.empty() &&
        static_cast<int>(setup_.region_weights.size()) !=
            setup_.part->region_count())
      throw ConfigError("region weight override count mismatch");
  }

  void episode_begin(SimCore& sim) override {
    pending_.assign(sim.net().nodes().size(), PendingTransition{});
    region_obs_.assign(setup_.part->region_count(), RegionObsState{});
    region_reward_sum_.assign(setup_.part->region_count(), 0.0);
    region_close_count_.assign(setup_.part->region_count(), 0);
    rng_ = make_rng(seed_, 0x5e71c7de);
    transitions_ = 0;
    for (auto& a : agents_.agents) {
      a.losses.clear();
      a.pending_since_train = 0;
    }
    train_steps_begin_ = total_train_steps();
  }

  PhaseCommand decide(SimCore& sim, int node) override {
    int r = setup_.part->region_of[node];
    RegionalAgent& agent = agents_.for_region(r);
    const RewardWeights& w = weights_for(r);

    SignalObservation sig = sim.observe_signal(node);
    std::vector<double> s_now = tle_encode(agents_.kind, sim, *setup_.part, w,
                                           node, sig.last_action, region_obs_);
    if (pending_[node].valid) close_pending(sim, node, s_now, false);

    const auto& mask = sim.net().mask(node);
    std::vector<double> masked = amm_mask(agent.online.forward(s_now), mask);
    int a = select_action(masked, mask, eps_, rng_);
    pending_[node] = PendingTransition{std::move(s_now), a, true};

    PhaseAction act = action_from_index(a);
    return PhaseCommand{act.logic, green_seconds(sim.net().timing(), act), a};
  }

  void episode_end(SimCore& sim) override {
    // horizon closes every open transition with the terminal flag
    for (int node : sim.net().signalized_ids())
      if (pending_[node].valid) {
        int r = setup_.part->region_of[node];
        SignalObservation sig = sim.observe_signal(node);
        std::vector<double> s_now =
            tle_encode(agents_.kind, sim, *setup_.part, weights_for(r), node,
                       sig.last_action, region_obs_);
        close_pending(sim, node, s_now, true);
      }
  }

  long transitions() const { return transitions_; }
  long train_steps_this_episode() const {
    return total_train_steps() - train_steps_begin_;
  }
  std::vector<double> region_reward_mean() const {
    std::vector<double> out(region_reward_sum_.size(), 0.0);
    for (std::size_t r = 0; r < out.size(); ++r)
      if (region_close_count_[r] > 0)
        out[r] = region_reward_sum_[r] /
                 static_cast<double>(region_close_count_[r]);
    return out;
  }
  double mean_loss() const {
    double sum = 0.0;
    long n = 0;
    for (const auto& a : agents_.agents) {
      for (double l : a.losses) sum += l;
      n += static_cast<long>(a.losses.size());
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
  }

 private:
  const RewardWeights& weights_for(int r) const {
    return setup_.region_weights.empty() ? setup_.weights
                                         : setup_.region_weights[r];
  }

  long total_train_steps() const {
    long n = 0;
    for (const auto& a : agents_.agents) n += a.train_steps;
    return n;
  }

  double regional_reward(SimCore& sim, int node, int r,
                         const RewardWeights& w) {
    switch (agents_.kind) {
      case ModelKind::RegionWide: {
        RegionSnapshot snap =
            observe_region(sim, *setup_.part, r, w, region_obs_[r]);
        return regionwide_reward(snap, region_obs_[r], w);
      }
      case ModelKind::OneHop:
        return onehop_reward(sim, *setup_.part, node);
      default:
        return 0.0;
    }
  }

  void close_pending(SimCore& sim, int node, const std::vector<double>& s_next,
                     bool done) {
    int r = setup_.part->region_of[node];
    RegionalAgent& agent = agents_.for_region(r);
    const RewardWeights& w = weights_for(r);
    double r_local = local_reward(sim.observe_lane_metrics(node));
    double r_reg = regional_reward(sim, node, r, w);
    double reward = composite_reward(r_local, r_reg, w);
    region_reward_sum_[r] += r_reg;
    region_close_count_[r] += 1;

    if (mode_ == EpisodeMode::Train) {
      Transition tr;
      tr.s = std::move(pending_[node].s);
      tr.s_next = s_next;
      tr.action = pending_[node].action;
      tr.reward = reward;
      tr.done = done;
      tr.admissible_next = sim.net().mask(node);
      agent.memory->push(std::move(tr));
      transitions_ += 1;
      agent.pending_since_train += 1;
      if (agent.pending_since_train >= setup_.trainer.c_policy) {
        agent.pending_since_train = 0;
        TrainStats stats = train_step(agent.online, agent.target,
                                      *agent.memory, setup_.trainer,
                                      agent.adam, rng_);
        if (stats.trained) {
          agent.losses.push_back(stats.loss);
          agent.train_steps += 1;
          agent.steps_since_sync += 1;
          if (agent.steps_since_sync >= setup_.trainer.c_target) {
            sync_target(agent.online, agent.target);
            agent.steps_since_sync = 0;
          }
        }
      }
    }
    pending_[node].valid = false;
  }

  const EpisodeSetup& setup_;
  AgentSet& agents_;
  EpisodeMode mode_;
  double eps_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<PendingTransition> pending_;
  std::vector<RegionObsState> region_obs_;
  std::vector<double> region_reward_sum_;
  std::vector<long> region_close_count_;
  long transitions_ = 0;
  long train_steps_begin_ = 0;
};

}  // namespace

EpisodeResult run_episode(const EpisodeSetup& setup, AgentSet& agents,
                          EpisodeMode mode, double eps, std::uint64_t seed) {
  if (!setup.net || !setup.part) throw ConfigError("episode setup incomplete");
  SimCore sim(*setup.net, setup.meso, setup.flow.horizon_s);
  sim.set_event_log_enabled(setup.event_log);
  AgentController ctrl(setup, agents, mode, eps, seed);
  sim.set_controller(&ctrl);
  sim.set_demand(generate_demand(setup.flow, *setup.net, seed));
  sim.run();

  EpisodeResult res;
  res.metrics = sim.metrics();
  res.transitions = ctrl.transitions();
  res.train_steps = ctrl.train_steps_this_episode();
  res.mean_loss = ctrl.mean_loss();
  res.region_reward_mean = ctrl.region_reward_mean();
  res.event_log = sim.event_log();
  res.decisions = sim.decisions();
  return res;
}

EpisodeResult decentralized_execute(const EpisodeSetup& setup,
                                    const AgentSet& agents,
                                    std::uint64_t seed) {
  // Eval mode never mutates the agents; the cast only satisfies the shared
  // controller plumbing.
  AgentSet& mutable_agents = const_cast<AgentSet&>(agents);
  return run_episode(setup, mutable_agents, EpisodeMode::Eval, 0.0, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint_bundle(const std::string& dir, const AgentSet& agents,
                            const RegionPartition& part,
                            const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["model"] = tag_of(agents.kind);
  manifest["layout"] =
      nlohmann::ordered_json::parse(make_layout(agents.kind).descriptor());
  manifest["partition_hash"] = hex64(part.hash());
  manifest["config_hash"] = config_hash;
  manifest["regions"] = static_cast<int>(agents.agents.size());
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
  for (const auto& a : agents.agents)
    save_params(dir + "/region_" + std::to_string(a.region) + ".params",
                a.online);
}

AgentSet load_checkpoint_bundle(const std::string& dir,
                                const RegionPartition& part) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (!manifest.contains("model") || !manifest.contains("regions") ||
      !manifest.contains("partition_hash"))
    throw ConfigError("checkpoint manifest incomplete");
  ModelDescriptor desc = model_descriptor(manifest["model"].get<std::string>());
  if (!desc.learned) throw ConfigError("checkpoint names a rule-based model");
  if (manifest["partition_hash"].get<std::string>() != hex64(part.hash()))
    throw ConfigError("checkpoint was built for a different partition");
  int regions = manifest["regions"].get<int>();
  if (regions != part.region_count())
    throw ConfigError("checkpoint region count mismatch");

  AgentSet set;
  set.kind = desc.kind;
  set.agents.resize(regions);
  std::vector<int> expect = qnet_sizes(state_width(desc.kind));
  for (int r = 0; r < regions; ++r) {
    RegionalAgent& a = set.agents[r];
    a.region = r;
    a.online = load_params(dir + "/region_" + std::to_string(r) + ".params");
    if (a.online.sizes() != expect)
      throw ConfigError("checkpoint layer sizes do not match the model");
    a.target = a.online;
    a.adam.init_like(a.online);
    a.memory = std::make_unique<ReplayMemory>(TrainerConfig{}.memory);
  }
  return set;
}

}  // namespace tsc
