#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tsc/mesosim.hpp"

namespace tsc {

/// Round-robin over the admissible logics with fixed long greens. Also the
/// warm-up policy for region formation.
class FixedTimeController : public SignalController {
 public:
  void episode_begin(SimCore& sim) override;
  PhaseCommand decide(SimCore& sim, int node) override;

 private:
  std::vector<int> cursor_;
};

/// Uniform over the admissible duration-coded actions (an eps = 1 policy).
class RandomController : public SignalController {
 public:
  explicit RandomController(std::uint64_t seed) : seed_(seed) {}
  void episode_begin(SimCore& sim) override;
  PhaseCommand decide(SimCore& sim, int node) override;

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

struct ActuatedParams {
  double min_green_s = 5.0;
  double max_green_s = 45.0;
  double critical_gap_s = 3.0;
};

/// Gap-out actuation: cycle admissible logics round-robin; hold the green
/// while vehicles keep arriving on the served approaches within the critical
/// gap, bounded by the maximum green.
class ActuatedController : public SignalController {
 public:
  explicit ActuatedController(ActuatedParams p) : params_(p) {}
  void episode_begin(SimCore& sim) override;
  PhaseCommand decide(SimCore& sim, int node) override;
  double extend_green(SimCore& sim, int node) override;

 private:
  double last_served_arrival(SimCore& sim, int node) const;
  ActuatedParams params_;
  std::vector<int> cursor_;
  std::vector<double> green_start_;
};

}  // namespace tsc
