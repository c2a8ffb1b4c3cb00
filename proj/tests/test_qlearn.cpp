#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tsc/qlearn.hpp"
#include "tsc/util.hpp"

using namespace tsc;

namespace {

// Plain-loop forward pass kept deliberately independent of the Mlp code;
// returns post-activation layers and pre-activation layers.
struct RefForward {
  std::vector<std::vector<double>> post;  // [0] = input
  std::vector<std::vector<double>> pre;   // per layer
};

RefForward ref_forward(const Mlp& net, const std::vector<double>& x) {
  RefForward r;
  r.post.push_back(x);
  for (int l = 0; l < net.layer_count(); ++l) {
    int rows = net.sizes()[l + 1], cols = net.sizes()[l];
    std::vector<double> z(rows);
    for (int i = 0; i < rows; ++i) {
      double s = net.biases(l)[i];
      for (int j = 0; j < cols; ++j)
        s += net.weights(l)[static_cast<std::size_t>(i) * cols + j] *
             r.post.back()[j];
      z[i] = s;
    }
    r.pre.push_back(z);
    if (l + 1 < net.layer_count())
      for (double& v : z) v = std::max(0.0, v);
    r.post.push_back(z);
  }
  return r;
}

double loss_of(const Mlp& net, const std::vector<double>& x,
               const std::vector<double>& y) {
  std::vector<double> out = net.forward(x);
  double L = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i)
    L += 0.5 * (out[i] - y[i]) * (out[i] - y[i]);
  return L;
}

bool near_kink(const RefForward& r, double margin) {
  for (std::size_t l = 0; l + 1 < r.pre.size(); ++l)  // hidden layers only
    for (double z : r.pre[l])
      if (std::abs(z) < margin) return true;
  return false;
}

std::vector<double> randv(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("forward pass matches an independent plain-loop implementation") {
  std::mt19937_64 rng = make_rng(3, 1);
  Mlp net({5, 8, 6, 3});
  net.init_he_uniform(rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = randv(rng, 5);
    auto out = net.forward(x);
    auto ref = ref_forward(net, x);
    REQUIRE(out.size() == 3);
    for (int i = 0; i < 3; ++i)
      CHECK(out[i] == doctest::Approx(ref.post.back()[i]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng = make_rng(17, 2);
  const double h = 1e-5;

  for (int trial = 0; trial < 10; ++trial) {
    Mlp net({5, 8, 6, 3});
    net.init_he_uniform(rng);

    // stay away from ReLU kinks so the numeric derivative is meaningful
    std::vector<double> x, y;
    for (int tries = 0;; ++tries) {
      REQUIRE(tries < 200);
      x = randv(rng, 5);
      y = randv(rng, 3);
      if (!near_kink(ref_forward(net, x), 1e-3)) break;
    }

    Mlp::Activations acts;
    net.forward(x.data(), acts);
    std::vector<double> d_out(3);
    for (int i = 0; i < 3; ++i) d_out[i] = acts.a.back()[i] - y[i];
    Mlp::Grads grads;
    grads.init_like(net);
    net.backward(acts, d_out.data(), grads);

    double max_rel = 0.0;
    auto probe = [&](double& param, double analytic) {
      double save = param;
      param = save + h;
      double lp = loss_of(net, x, y);
      param = save - h;
      double lm = loss_of(net, x, y);
      param = save;
      double numeric = (lp - lm) / (2 * h);
      double rel = std::abs(analytic - numeric) /
                   std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    };
    for (int l = 0; l < net.layer_count(); ++l) {
      for (std::size_t i = 0; i < net.weights(l).size(); ++i)
        probe(net.weights(l)[i], grads.w[l][i]);
      for (std::size_t i = 0; i < net.biases(l).size(); ++i)
        probe(net.biases(l)[i], grads.b[l][i]);
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("he-uniform init: bounded, zero biases, seed-stable") {
  std::mt19937_64 a = make_rng(5, 9), b = make_rng(5, 9), c = make_rng(6, 9);
  Mlp n1({10, 20, 8}), n2({10, 20, 8}), n3({10, 20, 8});
  n1.init_he_uniform(a);
  n2.init_he_uniform(b);
  n3.init_he_uniform(c);
  CHECK(n1.bytes_equal(n2));
  CHECK(!n1.bytes_equal(n3));
  for (int l = 0; l < n1.layer_count(); ++l) {
    double bound = std::sqrt(6.0 / n1.sizes()[l]);
    for (double w : n1.weights(l)) {
      CHECK(w <= bound);
      CHECK(w >= -bound);
    }
    for (double bv : n1.biases(l)) CHECK(bv == 0.0);
  }
  CHECK(n1.param_hash() == n2.param_hash());
  CHECK(n1.param_hash() != n3.param_hash());
}

TEST_CASE("q-network head shape") {
  CHECK(qnet_sizes(17) == std::vector<int>{17, 512, 256, 128, 8});
  CHECK(qnet_sizes(74) == std::vector<int>{74, 512, 256, 128, 8});
  CHECK_THROWS_AS(Mlp({5}), ConfigError);
  CHECK_THROWS_AS(Mlp({5, 0, 3}), ConfigError);
}

TEST_CASE("ddqn target equals the plain dqn target when online == target") {
  std::mt19937_64 rng = make_rng(21, 4);
  Mlp online(qnet_sizes(6));
  online.init_he_uniform(rng);
  Mlp target = online;
  REQUIRE(online.bytes_equal(target));

  std::uniform_real_distribution<double> rd(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    Transition tr;
    tr.s = randv(rng, 6);
    tr.s_next = randv(rng, 6);
    tr.action = static_cast<int>(rng() % 8);
    tr.reward = rd(rng);
    tr.done = (i % 7 == 0);
    for (int a = 0; a < kActionCount; ++a)
      tr.admissible_next[a] = (rng() % 2) == 0;
    tr.admissible_next[i % 8] = true;  // keep at least one open

    double got = ddqn_target(tr, online, target, 0.95);
    if (tr.done) {
      CHECK(got == tr.reward);
    } else {
      auto q = target.forward(tr.s_next);
      double best = -1e300;
      for (int a = 0; a < kActionCount; ++a)
        if (tr.admissible_next[a]) best = std::max(best, q[a]);
      CHECK(got == doctest::Approx(tr.reward + 0.95 * best).epsilon(1e-12));
    }
  }
}

TEST_CASE("ddqn decouples selection from valuation") {
  // craft nets where online argmax != target argmax
  Mlp online({2, 4}), target({2, 4});
  // zero-init; set output weights directly
  for (double& w : online.weights(0)) w = 0.0;
  for (double& w : target.weights(0)) w = 0.0;
  online.biases(0) = {1.0, 5.0, 2.0, 0.0};
  target.biases(0) = {10.0, 3.0, 7.0, 0.0};
  Transition tr;
  tr.s = {0.0, 0.0};
  tr.s_next = {0.0, 0.0};
  tr.reward = 1.0;
  tr.admissible_next = {true, true, true, true, false, false, false, false};
  // online picks action 1; target values it at 3
  CHECK(ddqn_target(tr, online, target, 0.5) == doctest::Approx(1.0 + 0.5 * 3.0));
}

TEST_CASE("masked eps-greedy: uniform exploration, deterministic tie-break") {
  std::array<bool, kActionCount> adm{};
  adm[4] = adm[5] = adm[6] = adm[7] = true;  // a tee's admissible half

  std::mt19937_64 rng = make_rng(100, 1);
  std::vector<double> q = {9, 9, 9, 9, 0.5, -0.5, 0.25, 0.5};
  std::array<long, kActionCount> count{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) count[select_action(q, adm, 1.0, rng)]++;
  for (int a = 0; a < 4; ++a) CHECK(count[a] == 0);
  double expect = n / 4.0;
  double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int a = 4; a < 8; ++a)
    CHECK(std::abs(count[a] - expect) <= 3 * sigma);

  // greedy: ties resolve to the lowest admissible index
  for (int i = 0; i < 50; ++i)
    CHECK(select_action(q, adm, 0.0, rng) == 4);  // q[4] == q[7], 4 wins
  std::array<bool, kActionCount> none{};
  CHECK_THROWS_AS(select_action(q, none, 0.5, rng), SimError);
}

TEST_CASE("epsilon schedule") {
  CHECK(epsilon_at(0, 1.0, 0.99, 0.01) == 1.0);
  CHECK(epsilon_at(1, 1.0, 0.99, 0.01) == doctest::Approx(0.99));
  CHECK(epsilon_at(10, 1.0, 0.99, 0.01) ==
        doctest::Approx(std::pow(0.99, 10)));
  CHECK(epsilon_at(2000, 1.0, 0.99, 0.01) == 0.01);
}

TEST_CASE("replay memory is a FIFO ring") {
  ReplayMemory mem(5);
  CHECK(mem.capacity() == 5);
  for (int i = 0; i < 8; ++i) {
    Transition t;
    t.reward = i;
    mem.push(std::move(t));
    CHECK(mem.size() == std::min<std::size_t>(i + 1, 5));
  }
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(mem.at(i).reward == doctest::Approx(3.0 + i));  // 3..7 survive
}

TEST_CASE("adam single step matches the closed form") {
  Mlp net({1, 1});
  net.weights(0) = {2.0};
  net.biases(0) = {1.0};
  Mlp::Grads g;
  g.init_like(net);
  g.w[0][0] = 0.4;
  g.b[0][0] = -0.2;
  AdamState st;
  st.init_like(net);
  AdamParams p;  // lr 2.5e-4

  adam_update(net, g, st, p);
  auto step = [&](double grad) {
    double m = (1 - p.beta1) * grad;
    double v = (1 - p.beta2) * grad * grad;
    double mhat = m / (1 - p.beta1);
    double vhat = v / (1 - p.beta2);
    return p.lr * mhat / (std::sqrt(vhat) + p.eps);
  };
  CHECK(net.weights(0)[0] == doctest::Approx(2.0 - step(0.4)).epsilon(1e-14));
  CHECK(net.biases(0)[0] == doctest::Approx(1.0 + step(0.2)).epsilon(1e-14));
  CHECK(st.t == 1);
}

TEST_CASE("train_step: no-op under batch, then learns the targets") {
  std::mt19937_64 rng = make_rng(8, 8);
  TrainerConfig cfg;
  cfg.batch = 16;
  cfg.gamma = 0.0;  // pure regression onto rewards
  cfg.adam.lr = 5e-3;

  Mlp online({4, 32, 8});
  online.init_he_uniform(rng);
  Mlp target = online;
  AdamState adam;
  adam.init_like(online);
  ReplayMemory mem(500);

  TrainStats s0 = train_step(online, target, mem, cfg, adam, rng);
  CHECK(!s0.trained);

  Mlp before = online;
  // one fixed state per action, reward = action index
  for (int i = 0; i < 400; ++i) {
    Transition t;
    t.s.assign(4, 0.0);
    t.action = i % 8;
    t.s[0] = t.action / 7.0;
    t.reward = t.action;
    t.s_next.assign(4, 0.5);
    t.done = true;
    mem.push(std::move(t));
  }
  CHECK(before.bytes_equal(online));  // filling memory trains nothing

  double first = -1, last = -1;
  for (int step = 0; step < 400; ++step) {
    TrainStats st = train_step(online, target, mem, cfg, adam, rng);
    CHECK(st.trained);
    if (first < 0) first = st.loss;
    last = st.loss;
  }
  CHECK(!before.bytes_equal(online));
  CHECK(last < first * 0.2);  // regression objective drives loss down
}

TEST_CASE("parameter bytes round trip and reject corruption") {
  std::mt19937_64 rng = make_rng(12, 3);
  Mlp net(qnet_sizes(9));
  net.init_he_uniform(rng);
  std::string bytes = params_to_bytes(net);
  Mlp back = params_from_bytes(bytes);
  CHECK(back.bytes_equal(net));
  CHECK(back.sizes() == net.sizes());

  std::string bad = bytes;
  bad[0] ^= 0x5a;
  CHECK_THROWS_AS(params_from_bytes(bad), ConfigError);
  CHECK_THROWS_AS(params_from_bytes(bytes.substr(0, bytes.size() - 3)),
                  ConfigError);
}

TEST_CASE("sync_target copies parameters") {
  std::mt19937_64 rng = make_rng(14, 5);
  Mlp online({3, 6, 8}), target({3, 6, 8});
  online.init_he_uniform(rng);
  target.init_he_uniform(rng);
  CHECK(!online.bytes_equal(target));
  sync_target(online, target);
  CHECK(online.bytes_equal(target));
}
