#include "tsc/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "tsc/kernels.hpp"
#include "tsc/util.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("mlp needs at least two layers");
  for (int s : sizes_)
    if (s <= 0) throw ConfigError("mlp layer width must be positive");
  w_.resize(sizes_.size() - 1);
  b_.resize(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    w_[l].assign(static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l], 0.0);
    b_[l].assign(sizes_[l + 1], 0.0);
  }
}

void Mlp::init_he_uniform(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    double bound = std::sqrt(6.0 / static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (double& x : w_[l]) x = d(rng);
    std::fill(b_[l].begin(), b_[l].end(), 0.0);
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) n += w_[l].size() + b_[l].size();
  return n;
}

void Mlp::forward(const double* x, Activations& acts) const {
  acts.a.resize(sizes_.size());
  acts.a[0].assign(x, x + sizes_[0]);
  for (std::size_t l = 0; l < w_.size(); ++l) {
    auto& out = acts.a[l + 1];
    out.resize(sizes_[l + 1]);
    kernels::matvec_bias(w_[l].data(), b_[l].data(), acts.a[l].data(),
                         out.data(), out.size(), acts.a[l].size());
    if (l + 1 < w_.size()) kernels::relu(out.data(), out.size());
  }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != sizes_.front())
    throw SimError("mlp input width mismatch");
  Activations acts;
  forward(x.data(), acts);
  return acts.a.back();
}

void Mlp::Grads::init_like(const Mlp& net) {
  w.resize(net.layer_count());
  b.resize(net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    w[l].assign(net.weights(l).size(), 0.0);
    b[l].assign(net.biases(l).size(), 0.0);
  }
}

void Mlp::Grads::zero() {
  for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
  for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
}

void Mlp::backward(const Activations& acts, const double* d_out,
                   Grads& grads) const {
  int layers = layer_count();
  std::vector<double> delta(d_out, d_out + sizes_.back());
  std::vector<double> next;
  for (int l = layers - 1; l >= 0; --l) {
    std::size_t rows = b_[l].size();
    std::size_t cols = acts.a[l].size();
    kernels::rank1_acc(delta.data(), acts.a[l].data(), grads.w[l].data(), rows,
                       cols);
    kernels::axpy(1.0, delta.data(), grads.b[l].data(), rows);
    if (l == 0) break;
    next.assign(cols, 0.0);
    kernels::matvec_t_acc(w_[l].data(), delta.data(), next.data(), rows, cols);
    kernels::relu_mask(acts.a[l].data(), next.data(), cols);
    delta.swap(next);
  }
}

bool Mlp::same_shape(const Mlp& o) const { return sizes_ == o.sizes_; }

bool Mlp::bytes_equal(const Mlp& o) const {
  if (!same_shape(o)) return false;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (std::memcmp(w_[l].data(), o.w_[l].data(),
                    w_[l].size() * sizeof(double)) != 0)
      return false;
    if (std::memcmp(b_[l].data(), o.b_[l].data(),
                    b_[l].size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

std::uint64_t Mlp::param_hash() const { return fnv1a64(params_to_bytes(*this)); }

std::vector<int> qnet_sizes(int d_in) { return {d_in, 512, 256, 128, 8}; }

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void AdamState::init_like(const Mlp& net) {
  t = 0;
  mw.resize(net.layer_count());
  vw.resize(net.layer_count());
  mb.resize(net.layer_count());
  vb.resize(net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) {
    mw[l].assign(net.weights(l).size(), 0.0);
    vw[l].assign(net.weights(l).size(), 0.0);
    mb[l].assign(net.biases(l).size(), 0.0);
    vb[l].assign(net.biases(l).size(), 0.0);
  }
}

void adam_update(Mlp& net, const Mlp::Grads& grads, AdamState& st,
                 const AdamParams& p) {
  st.t += 1;
  double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(st.t));
  for (int l = 0; l < net.layer_count(); ++l) {
    kernels::adam_step(net.weights(l).data(), grads.w[l].data(),
                       st.mw[l].data(), st.vw[l].data(), net.weights(l).size(),
                       p.lr, p.beta1, p.beta2, p.eps, bc1, bc2);
    kernels::adam_step(net.biases(l).data(), grads.b[l].data(),
                       st.mb[l].data(), st.vb[l].data(), net.biases(l).size(),
                       p.lr, p.beta1, p.beta2, p.eps, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// Replay and policy
// ---------------------------------------------------------------------------

void ReplayMemory::push(Transition t) {
  if (cap_ == 0) throw ConfigError("replay capacity must be positive");
  if (data_.size() < cap_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % cap_;
  }
}

int select_action(const std::vector<double>& q,
                  const std::array<bool, kActionCount>& admissible, double eps,
                  std::mt19937_64& rng) {
  int n_adm = 0;
  for (bool b : admissible) n_adm += b ? 1 : 0;
  if (n_adm == 0) throw SimError("no admissible action");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < eps) {
    std::uniform_int_distribution<int> pick(0, n_adm - 1);
    int k = pick(rng);
    for (int i = 0; i < kActionCount; ++i)
      if (admissible[i] && k-- == 0) return i;
    throw SimError("admissible pick out of range");
  }
  int best = -1;
  double best_q = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kActionCount; ++i)
    if (admissible[i] && q[i] > best_q) {
      best = i;
      best_q = q[i];
    }
  return best;
}

double epsilon_at(long episode, double eps0, double decay, double eps_min) {
  return std::max(eps_min, eps0 * std::pow(decay, static_cast<double>(episode)));
}

double ddqn_target(const Transition& tr, const Mlp& online, const Mlp& target,
                   double gamma) {
  if (tr.done) return tr.reward;
  std::vector<double> q_online = online.forward(tr.s_next);
  int best = -1;
  double best_q = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kActionCount; ++i)
    if (tr.admissible_next[i] && q_online[i] > best_q) {
      best = i;
      best_q = q_online[i];
    }
  if (best < 0) throw SimError("transition with no admissible successor");
  std::vector<double> q_target = target.forward(tr.s_next);
  return tr.reward + gamma * q_target[best];
}

TrainStats train_step(Mlp& online, const Mlp& target, const ReplayMemory& mem,
                      const TrainerConfig& cfg, AdamState& adam,
                      std::mt19937_64& rng) {
  TrainStats stats;
  if (mem.size() < static_cast<std::size_t>(cfg.batch)) return stats;
  std::uniform_int_distribution<std::size_t> pick(0, mem.size() - 1);
  Mlp::Grads grads;
  grads.init_like(online);
  Mlp::Activations acts;
  std::vector<double> d_out(online.output_width(), 0.0);
  double loss = 0.0;
  double inv_b = 1.0 / static_cast<double>(cfg.batch);
  for (int i = 0; i < cfg.batch; ++i) {
    const Transition& tr = mem.at(pick(rng));
    double y = ddqn_target(tr, online, target, cfg.gamma);
    online.forward(tr.s.data(), acts);
    double qa = acts.a.back()[tr.action];
    double err = qa - y;
    loss += err * err * inv_b;
    std::fill(d_out.begin(), d_out.end(), 0.0);
    d_out[tr.action] = 2.0 * err * inv_b;
    online.backward(acts, d_out.data(), grads);
  }
  adam_update(online, grads, adam, cfg.adam);
  stats.trained = true;
  stats.loss = loss;
  return stats;
}

void sync_target(const Mlp& online, Mlp& target) { target = online; }

// ---------------------------------------------------------------------------
// Parameter files
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kMagic = 0x51504b31;  // "QPK1"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ConfigError("parameter file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i]))
         << (8 * i);
  pos += 4;
  return v;
}
void put_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}
double get_f64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ConfigError("parameter file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i]))
            << (8 * i);
  pos += 8;
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}
}  // namespace

std::string params_to_bytes(const Mlp& net) {
  std::string out;
  put_u32(out, kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) put_u32(out, static_cast<std::uint32_t>(s));
  for (int l = 0; l < net.layer_count(); ++l) {
    for (double x : net.weights(l)) put_f64(out, x);
    for (double x : net.biases(l)) put_f64(out, x);
  }
  return out;
}

Mlp params_from_bytes(const std::string& bytes) {
  std::size_t pos = 0;
  if (get_u32(bytes, pos) != kMagic) throw ConfigError("not a parameter file");
  if (get_u32(bytes, pos) != kVersion)
    throw ConfigError("unsupported parameter file version");
  std::uint32_t n_sizes = get_u32(bytes, pos);
  if (n_sizes < 2 || n_sizes > 64) throw ConfigError("bad layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n_sizes; ++i)
    sizes.push_back(static_cast<int>(get_u32(bytes, pos)));
  Mlp net(sizes);
  for (int l = 0; l < net.layer_count(); ++l) {
    for (double& x : net.weights(l)) x = get_f64(bytes, pos);
    for (double& x : net.biases(l)) x = get_f64(bytes, pos);
  }
  if (pos != bytes.size()) throw ConfigError("trailing bytes in parameter file");
  return net;
}

void save_params(const std::string& path, const Mlp& net) {
  write_file(path, params_to_bytes(net));
}

Mlp load_params(const std::string& path) {
  return params_from_bytes(read_file(path));
}

}  // namespace tsc
