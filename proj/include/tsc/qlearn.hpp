#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsc/netmodel.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Multilayer perceptron (ReLU hidden layers, identity output)
// ---------------------------------------------------------------------------

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  /// He-style uniform fan-in init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
  /// biases zero.
  void init_he_uniform(std::mt19937_64& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_width() const { return sizes_.front(); }
  int output_width() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(w_.size()); }
  std::vector<double>& weights(int l) { return w_[l]; }
  std::vector<double>& biases(int l) { return b_[l]; }
  const std::vector<double>& weights(int l) const { return w_[l]; }
  const std::vector<double>& biases(int l) const { return b_[l]; }
  std::size_t param_count() const;

  /// Post-activation values per layer, [0] = input copy.
  struct Activations {
    std::vector<std::vector<double>> a;
  };
  void forward(const double* x, Activations& acts) const;
  std::vector<double> forward(const std::vector<double>& x) const;

  struct Grads {
    std::vector<std::vector<double>> w, b;
    void init_like(const Mlp& net);
    void zero();
  };
  /// Accumulate parameter gradients for one sample given d(loss)/d(output).
  void backward(const Activations& acts, const double* d_out,
                Grads& grads) const;

  bool same_shape(const Mlp& o) const;
  bool bytes_equal(const Mlp& o) const;
  std::uint64_t param_hash() const;

 private:
  std::vector<int> sizes_;
  std::vector<std::vector<double>> w_;  // row-major [out x in]
  std::vector<std::vector<double>> b_;
};

/// Layer widths for a Q-network head on d_in features.
std::vector<int> qnet_sizes(int d_in);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamParams {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> mw, vw, mb, vb;
  long t = 0;
  void init_like(const Mlp& net);
};

void adam_update(Mlp& net, const Mlp::Grads& grads, AdamState& st,
                 const AdamParams& p);

// ---------------------------------------------------------------------------
// Replay and policy
// ---------------------------------------------------------------------------

struct Transition {
  std::vector<double> s, s_next;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  std::array<bool, kActionCount> admissible_next{};
};

/// Fixed-capacity FIFO ring.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : cap_(capacity) {}
  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return cap_; }
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

 private:
  std::size_t cap_;
  std::size_t head_ = 0;  // oldest element when full
  std::vector<Transition> data_;
};

/// Masked eps-greedy. Exploration draws uniformly over the admissible set;
/// exploitation takes the admissible argmax, lowest index on ties. Throws
/// SimError if no action is admissible.
int select_action(const std::vector<double>& q,
                  const std::array<bool, kActionCount>& admissible, double eps,
                  std::mt19937_64& rng);

/// eps_t = max(eps_min, eps0 * decay^t) after t completed episodes.
double epsilon_at(long episode, double eps0, double decay, double eps_min);

struct TrainerConfig {
  double eps0 = 1.0;
  double eps_decay = 0.99;
  double eps_min = 0.01;
  double gamma = 0.95;
  int batch = 64;
  int c_policy = 20;     // decisions per train step
  long c_target = 2000;  // train steps per hard target copy
  std::size_t memory = 50000;
  AdamParams adam;
};

/// Double-DQN target: r + gamma * Q_target(s', argmax over the admissible
/// actions of Q_online(s', .)); plain r on terminal transitions.
double ddqn_target(const Transition& tr, const Mlp& online, const Mlp& target,
                   double gamma);

struct TrainStats {
  bool trained = false;
  double loss = 0.0;
};

/// One minibatch step: uniform sample, DDQN targets, MSE on the selected
/// action entries only, one Adam update. No-op signal while the memory holds
/// fewer than `batch` transitions.
TrainStats train_step(Mlp& online, const Mlp& target, const ReplayMemory& mem,
                      const TrainerConfig& cfg, AdamState& adam,
                      std::mt19937_64& rng);

void sync_target(const Mlp& online, Mlp& target);

// ---------------------------------------------------------------------------
// Parameter files
// ---------------------------------------------------------------------------

/// Versioned binary: magic, version, layer sizes, then per layer the
/// row-major weight block and bias block as little-endian 64-bit floats.
void save_params(const std::string& path, const Mlp& net);
Mlp load_params(const std::string& path);
std::string params_to_bytes(const Mlp& net);
Mlp params_from_bytes(const std::string& bytes);

}  // namespace tsc
