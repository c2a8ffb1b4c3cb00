#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "tsc/kernels.hpp"

namespace k = tsc::kernels;

namespace {

std::vector<double> randv(std::mt19937_64& rng, std::size_t n, double lo = -2.0,
                          double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Sizes chosen to hit vector bodies and scalar tails.
const std::size_t kSizes[] = {1, 3, 4, 7, 8, 17, 64, 129};

struct ImplGuard {
  k::Impl saved = k::active();
  ~ImplGuard() { k::force(saved); }
};

}  // namespace

TEST_CASE("dispatch reports a usable implementation") {
  CHECK((k::active() == k::Impl::Scalar || k::active() == k::Impl::Avx2));
  if (k::active() == k::Impl::Avx2) CHECK(k::avx2_available());
  CHECK(std::string(k::to_string(k::Impl::Scalar)) == "scalar");
}

TEST_CASE("scalar and simd variants agree on every primitive") {
  if (!k::avx2_available()) {
    MESSAGE("no AVX2 on this host; scalar-only");
    return;
  }
  ImplGuard guard;
  std::mt19937_64 rng(7);
  const double tol = 1e-12;

  for (std::size_t n : kSizes) {
    auto a = randv(rng, n), b = randv(rng, n);

    k::force(k::Impl::Scalar);
    double dot_s = k::dot(a.data(), b.data(), n);
    k::force(k::Impl::Avx2);
    double dot_v = k::dot(a.data(), b.data(), n);
    CHECK(std::abs(dot_s - dot_v) <= tol * (1.0 + std::abs(dot_s)));

    auto ys = b, yv = b;
    k::force(k::Impl::Scalar);
    k::axpy(0.37, a.data(), ys.data(), n);
    k::force(k::Impl::Avx2);
    k::axpy(0.37, a.data(), yv.data(), n);
    CHECK(max_abs_diff(ys, yv) <= tol);

    auto xs = a, xv = a;
    k::force(k::Impl::Scalar);
    k::relu(xs.data(), n);
    k::force(k::Impl::Avx2);
    k::relu(xv.data(), n);
    CHECK(max_abs_diff(xs, xv) == 0.0);  // sign test, bitwise equal

    auto gs = b, gv = b;
    k::force(k::Impl::Scalar);
    k::relu_mask(xs.data(), gs.data(), n);
    k::force(k::Impl::Avx2);
    k::relu_mask(xv.data(), gv.data(), n);
    CHECK(max_abs_diff(gs, gv) == 0.0);
  }

  for (std::size_t rows : {1u, 3u, 8u, 33u})
    for (std::size_t cols : {1u, 5u, 16u, 41u}) {
      auto w = randv(rng, rows * cols);
      auto bias = randv(rng, rows);
      auto x = randv(rng, cols);
      auto d = randv(rng, rows);

      std::vector<double> ys(rows), yv(rows);
      k::force(k::Impl::Scalar);
      k::matvec_bias(w.data(), bias.data(), x.data(), ys.data(), rows, cols);
      k::force(k::Impl::Avx2);
      k::matvec_bias(w.data(), bias.data(), x.data(), yv.data(), rows, cols);
      CHECK(max_abs_diff(ys, yv) <= tol);

      std::vector<double> xs(cols, 0.5), xv(cols, 0.5);
      k::force(k::Impl::Scalar);
      k::matvec_t_acc(w.data(), d.data(), xs.data(), rows, cols);
      k::force(k::Impl::Avx2);
      k::matvec_t_acc(w.data(), d.data(), xv.data(), rows, cols);
      CHECK(max_abs_diff(xs, xv) <= tol);

      std::vector<double> gs(rows * cols, 0.25), gv(rows * cols, 0.25);
      k::force(k::Impl::Scalar);
      k::rank1_acc(d.data(), x.data(), gs.data(), rows, cols);
      k::force(k::Impl::Avx2);
      k::rank1_acc(d.data(), x.data(), gv.data(), rows, cols);
      CHECK(max_abs_diff(gs, gv) <= tol);
    }

  for (std::size_t n : kSizes) {
    auto g = randv(rng, n);
    auto w0 = randv(rng, n);
    auto m0 = randv(rng, n, 0.0, 0.1);
    auto v0 = randv(rng, n, 0.0, 0.1);
    auto ws = w0, wv = w0, ms = m0, mv = m0, vs = v0, vv = v0;
    k::force(k::Impl::Scalar);
    k::adam_step(ws.data(), g.data(), ms.data(), vs.data(), n, 1e-3, 0.9,
                 0.999, 1e-8, 0.1, 0.001999);
    k::force(k::Impl::Avx2);
    k::adam_step(wv.data(), g.data(), mv.data(), vv.data(), n, 1e-3, 0.9,
                 0.999, 1e-8, 0.1, 0.001999);
    CHECK(max_abs_diff(ws, wv) <= tol);
    CHECK(max_abs_diff(ms, mv) <= tol);
    CHECK(max_abs_diff(vs, vv) <= tol);
  }
}

TEST_CASE("scalar reference arithmetic spot checks") {
  ImplGuard guard;
  k::force(k::Impl::Scalar);
  double a[] = {1.0, 2.0, 3.0};
  double b[] = {4.0, -5.0, 6.0};
  CHECK(k::dot(a, b, 3) == doctest::Approx(1 * 4 - 2 * 5 + 3 * 6));

  // y = Wx + b with W = [[1,2],[3,4],[5,6]]
  double w[] = {1, 2, 3, 4, 5, 6};
  double bias[] = {0.5, -0.5, 0.0};
  double x[] = {2.0, -1.0};
  double y[3];
  k::matvec_bias(w, bias, x, y, 3, 2);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(1.5));
  CHECK(y[2] == doctest::Approx(4.0));

  // x_out += W^T d
  double d[] = {1.0, 0.0, -1.0};
  double xo[] = {0.0, 10.0};
  k::matvec_t_acc(w, d, xo, 3, 2);
  CHECK(xo[0] == doctest::Approx(1 - 5));
  CHECK(xo[1] == doctest::Approx(10 + 2 - 6));

  // G += d x^T
  double gmat[6] = {0};
  k::rank1_acc(d, x, gmat, 3, 2);
  CHECK(gmat[0] == doctest::Approx(2.0));
  CHECK(gmat[1] == doctest::Approx(-1.0));
  CHECK(gmat[4] == doctest::Approx(-2.0));
  CHECK(gmat[5] == doctest::Approx(1.0));

  double relu_v[] = {-1.0, 0.0, 2.5};
  k::relu(relu_v, 3);
  CHECK(relu_v[0] == 0.0);
  CHECK(relu_v[1] == 0.0);
  CHECK(relu_v[2] == 2.5);

  double act[] = {0.0, 1.0, -3.0};
  double grad[] = {5.0, 5.0, 5.0};
  k::relu_mask(act, grad, 3);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 5.0);
  CHECK(grad[2] == 0.0);
}

TEST_CASE("forcing an unavailable implementation throws") {
  if (k::avx2_available()) return;
  CHECK_THROWS(k::force(k::Impl::Avx2));
}
