#pragma once

#include <cstddef>

// Dense double-precision primitives backing the Q-network math. Every
// operation has a scalar reference implementation and an AVX2 variant;
// the active table is chosen once at startup from cpuid (override with
// TSC_KERNELS=scalar|avx2). Variants are equivalence-tested against the
// scalar reference.
namespace tsc::kernels {

enum class Impl { Scalar, Avx2 };

/// Implementation selected for this process.
Impl active();
/// Force an implementation (tests; throws if unavailable on this CPU).
void force(Impl impl);
/// True if the running CPU supports the AVX2 variant.
bool avx2_available();
const char* to_string(Impl impl);

double dot(const double* a, const double* b, std::size_t n);
/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
/// y = W x + b, W row-major [rows x cols]
void matvec_bias(const double* w, const double* b, const double* x, double* y,
                 std::size_t rows, std::size_t cols);
/// x_out += W^T d, W row-major [rows x cols], d has rows entries
void matvec_t_acc(const double* w, const double* d, double* x_out,
                  std::size_t rows, std::size_t cols);
/// G += d x^T (rank-1 accumulate into row-major [rows x cols])
void rank1_acc(const double* d, const double* x, double* g, std::size_t rows,
               std::size_t cols);
void relu(double* x, std::size_t n);
/// grad *= 1[act > 0]
void relu_mask(const double* act, double* grad, std::size_t n);
/// One Adam step over n parameters. bc1/bc2 are the bias-correction factors
/// 1 - beta^t already raised to the step count.
void adam_step(double* w, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2);

}  // namespace tsc::kernels
