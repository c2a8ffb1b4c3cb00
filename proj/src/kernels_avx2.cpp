#include <immintrin.h>

#include <cmath>
#include <cstddef>

// AVX2/FMA variants, 4 doubles per lane with scalar tails. Only compiled
// into TUs built with -mavx2 -mfma; callers go through the dispatch table.
namespace tsc::kernels::avx2 {

namespace {
inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}
}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_bias(const double* w, const double* b, const double* x, double* y,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot(w + r * cols, x, cols);
}

void matvec_t_acc(const double* w, const double* d, double* x_out,
                  std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(d[r], w + r * cols, x_out, cols);
}

void rank1_acc(const double* d, const double* x, double* g, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(d[r], x, g + r * cols, cols);
}

void relu(double* x, std::size_t n) {
  __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i)
    if (x[i] < 0.0) x[i] = 0.0;
}

void relu_mask(const double* act, double* grad, std::size_t n) {
  __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(act + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad + i,
                     _mm256_and_pd(keep, _mm256_loadu_pd(grad + i)));
  }
  for (; i < n; ++i)
    if (act[i] <= 0.0) grad[i] = 0.0;
}

void adam_step(double* w, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
  __m256d vb1 = _mm256_set1_pd(beta1), v1mb1 = _mm256_set1_pd(1.0 - beta1);
  __m256d vb2 = _mm256_set1_pd(beta2), v1mb2 = _mm256_set1_pd(1.0 - beta2);
  __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
  __m256d vbc1 = _mm256_set1_pd(bc1), vbc2 = _mm256_set1_pd(bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gi = _mm256_loadu_pd(g + i);
    __m256d mi = _mm256_fmadd_pd(v1mb1, gi, _mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)));
    __m256d vi = _mm256_fmadd_pd(v1mb2, _mm256_mul_pd(gi, gi),
                                 _mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    __m256d mhat = _mm256_div_pd(mi, vbc1);
    __m256d vhat = _mm256_div_pd(vi, vbc2);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d wi = _mm256_loadu_pd(w + i);
    wi = _mm256_sub_pd(wi, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
    _mm256_storeu_pd(w + i, wi);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace tsc::kernels::avx2
