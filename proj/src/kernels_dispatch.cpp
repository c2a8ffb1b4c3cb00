#include "tsc/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace tsc::kernels {

namespace scalar {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void matvec_bias(const double*, const double*, const double*, double*,
                 std::size_t, std::size_t);
void matvec_t_acc(const double*, const double*, double*, std::size_t,
                  std::size_t);
void rank1_acc(const double*, const double*, double*, std::size_t,
               std::size_t);
void relu(double*, std::size_t);
void relu_mask(const double*, double*, std::size_t);
void adam_step(double*, const double*, double*, double*, std::size_t, double,
               double, double, double, double, double);
}  // namespace scalar

#ifdef TSC_BUILD_AVX2
namespace avx2 {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void matvec_bias(const double*, const double*, const double*, double*,
                 std::size_t, std::size_t);
void matvec_t_acc(const double*, const double*, double*, std::size_t,
                  std::size_t);
void rank1_acc(const double*, const double*, double*, std::size_t,
               std::size_t);
void relu(double*, std::size_t);
void relu_mask(const double*, double*, std::size_t);
void adam_step(double*, const double*, double*, double*, std::size_t, double,
               double, double, double, double, double);
}  // namespace avx2
#endif

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*matvec_bias)(const double*, const double*, const double*, double*,
                      std::size_t, std::size_t);
  void (*matvec_t_acc)(const double*, const double*, double*, std::size_t,
                       std::size_t);
  void (*rank1_acc)(const double*, const double*, double*, std::size_t,
                    std::size_t);
  void (*relu)(double*, std::size_t);
  void (*relu_mask)(const double*, double*, std::size_t);
  void (*adam_step)(double*, const double*, double*, double*, std::size_t,
                    double, double, double, double, double, double);
};

constexpr Table kScalarTable = {
    scalar::dot,       scalar::axpy,      scalar::matvec_bias,
    scalar::matvec_t_acc, scalar::rank1_acc, scalar::relu,
    scalar::relu_mask, scalar::adam_step};

#ifdef TSC_BUILD_AVX2
constexpr Table kAvx2Table = {
    avx2::dot,       avx2::axpy,      avx2::matvec_bias,
    avx2::matvec_t_acc, avx2::rank1_acc, avx2::relu,
    avx2::relu_mask, avx2::adam_step};
#endif

bool cpu_has_avx2() {
#ifdef TSC_BUILD_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Dispatch {
  Impl impl;
  const Table* table;
  Dispatch() {
    bool want_avx2 = cpu_has_avx2();
    if (const char* env = std::getenv("TSC_KERNELS")) {
      std::string v = env;
      if (v == "scalar") want_avx2 = false;
      if (v == "avx2" && !cpu_has_avx2())
        throw std::runtime_error("TSC_KERNELS=avx2 requested but unavailable");
    }
#ifdef TSC_BUILD_AVX2
    if (want_avx2) {
      impl = Impl::Avx2;
      table = &kAvx2Table;
      return;
    }
#endif
    impl = Impl::Scalar;
    table = &kScalarTable;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Impl active() { return dispatch().impl; }

bool avx2_available() { return cpu_has_avx2(); }

void force(Impl impl) {
  if (impl == Impl::Avx2) {
#ifdef TSC_BUILD_AVX2
    if (!cpu_has_avx2()) throw std::runtime_error("avx2 kernels unavailable");
    dispatch().impl = Impl::Avx2;
    dispatch().table = &kAvx2Table;
    return;
#else
    throw std::runtime_error("avx2 kernels not built");
#endif
  }
  dispatch().impl = Impl::Scalar;
  dispatch().table = &kScalarTable;
}

const char* to_string(Impl impl) {
  return impl == Impl::Avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().table->dot(a, b, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().table->axpy(alpha, x, y, n);
}
void matvec_bias(const double* w, const double* b, const double* x, double* y,
                 std::size_t rows, std::size_t cols) {
  dispatch().table->matvec_bias(w, b, x, y, rows, cols);
}
void matvec_t_acc(const double* w, const double* d, double* x_out,
                  std::size_t rows, std::size_t cols) {
  dispatch().table->matvec_t_acc(w, d, x_out, rows, cols);
}
void rank1_acc(const double* d, const double* x, double* g, std::size_t rows,
               std::size_t cols) {
  dispatch().table->rank1_acc(d, x, g, rows, cols);
}
void relu(double* x, std::size_t n) { dispatch().table->relu(x, n); }
void relu_mask(const double* act, double* grad, std::size_t n) {
  dispatch().table->relu_mask(act, grad, n);
}
void adam_step(double* w, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
  dispatch().table->adam_step(w, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace tsc::kernels
