#include <cmath>
#include <cstddef>

// Reference implementations. Every variant must match these up to
// floating-point reassociation.
namespace tsc::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] < 0.0) x[i] = 0.0;
}

void relu_mask(const double* act, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (act[i] <= 0.0) grad[i] = 0.0;
}

void adam_step(double* w, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace tsc::kernels::scalar
