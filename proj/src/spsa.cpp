#include "tsc/spsa.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsc/util.hpp"

namespace tsc {

double spsa_a(const SpsaSchedule& s, int k) {
  if (k < 1) throw ConfigError("spsa iterations start at 1");
  return s.a / std::pow(static_cast<double>(k) + s.big_a, s.alpha);
}

double spsa_c(const SpsaSchedule& s, int k) {
  if (k < 1) throw ConfigError("spsa iterations start at 1");
  return s.c / std::pow(static_cast<double>(k), s.gamma);
}

Lambda spsa_update(const Lambda& lam, const Lambda& grad_hat, double a_k) {
  Lambda out;
  for (int i = 0; i < 3; ++i)
    out[i] = std::max(0.0, lam[i] + a_k * grad_hat[i]);
  return out;
}

namespace {

RewardWeights with_lambda(const RewardWeights& base, const Lambda& lam) {
  RewardWeights w = base;
  w.lambda_spill = lam[0];
  w.lambda_switch = lam[1];
  w.lambda_out = lam[2];
  return w;
}

}  // namespace

ProbeResult spsa_probe(const EpisodeSetup& setup, AgentSet& agents,
                       const std::vector<Lambda>& lambdas, double c_k,
                       double eps, std::uint64_t probe_seed,
                       std::uint64_t delta_seed) {
  if (!setup.part) throw ConfigError("episode setup incomplete");
  int regions = setup.part->region_count();
  if (static_cast<int>(lambdas.size()) != regions)
    throw ConfigError("lambda vector does not cover the partition");

  ProbeResult res;
  res.delta.resize(regions);
  auto rng = make_rng(delta_seed, 0x5b5a0dd5);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int r = 0; r < regions; ++r)
    for (int i = 0; i < 3; ++i) res.delta[r][i] = coin(rng) == 0 ? -1 : 1;

  res.grad_hat.assign(regions, Lambda{0.0, 0.0, 0.0});
  res.j_plus.assign(regions, 0.0);
  res.j_minus.assign(regions, 0.0);
  if (c_k == 0.0) return res;

  auto probe_setup = setup;
  auto run_side = [&](double sign) {
    probe_setup.region_weights.clear();
    probe_setup.region_weights.reserve(regions);
    for (int r = 0; r < regions; ++r) {
      Lambda lam;
      for (int i = 0; i < 3; ++i)
        lam[i] = std::max(
            0.0, lambdas[r][i] + sign * c_k * static_cast<double>(res.delta[r][i]));
      probe_setup.region_weights.push_back(with_lambda(setup.weights, lam));
    }
    EpisodeResult er =
        run_episode(probe_setup, agents, EpisodeMode::Probe, eps, probe_seed);
    return er.region_reward_mean;
  };

  res.j_plus = run_side(+1.0);
  res.j_minus = run_side(-1.0);
  for (int r = 0; r < regions; ++r)
    for (int i = 0; i < 3; ++i)
      res.grad_hat[r][i] = (res.j_plus[r] - res.j_minus[r]) /
                           (2.0 * c_k * static_cast<double>(res.delta[r][i]));
  return res;
}

}  // namespace tsc
