#pragma once

#include <cstddef>

namespace meta4::kernels {

// Production kernels used by the tensor ops. Parallel loops split work per
// output element; each element's accumulation runs in a fixed order, so the
// result is bit-identical for any thread count.

// C[m x n] = A[m x k] * B[k x n], row-major.
void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n);

// out[n x m] = transpose of in[m x n].
void transpose(const double* in, double* out, size_t m, size_t n);

// Serial reference implementations. Kept as oracles for the parallel
// kernels and as the baseline of the kernel benchmark.
namespace reference {

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n);

void transpose(const double* in, double* out, size_t m, size_t n);

}  // namespace reference

}  // namespace meta4::kernels
