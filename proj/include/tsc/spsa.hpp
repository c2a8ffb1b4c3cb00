#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tsc/semictde.hpp"

namespace tsc {

struct SpsaSchedule {
  double a = 0.1;
  double big_a = 10.0;
  double c = 0.2;
  double alpha = 0.602;
  double gamma = 0.101;
};

/// a_k = a / (k + A)^alpha, c_k = c / k^gamma for iterations k = 1, 2, ...
double spsa_a(const SpsaSchedule& s, int k);
double spsa_c(const SpsaSchedule& s, int k);

using Lambda = std::array<double, 3>;  // spill, switch, out

/// Ascent step with elementwise clamp at zero.
Lambda spsa_update(const Lambda& lam, const Lambda& grad_hat, double a_k);

struct ProbeResult {
  std::vector<Lambda> grad_hat;   // per region
  std::vector<double> j_plus, j_minus;
  std::vector<std::array<int, 3>> delta;  // Rademacher signs used
};

/// Simultaneous-perturbation probe: every region gets its own Rademacher
/// delta; both perturbed settings (clamped at zero) run one frozen episode
/// each with identical seeds; per-region objectives are the mean per-decision
/// regional rewards. c_k = 0 yields a zero estimate.
ProbeResult spsa_probe(const EpisodeSetup& setup, AgentSet& agents,
                       const std::vector<Lambda>& lambdas, double c_k,
                       double eps, std::uint64_t probe_seed,
                       std::uint64_t delta_seed);

struct TuneHistoryRow {
  int iteration = 0;
  int region = 0;
  Lambda lambda{};
  Lambda grad_hat{};
  double j_plus = 0.0, j_minus = 0.0;
  double a_k = 0.0, c_k = 0.0;
};

}  // namespace tsc
