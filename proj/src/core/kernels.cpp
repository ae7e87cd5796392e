#include "meta4/core/kernels.hpp"

#include <algorithm>

namespace meta4::kernels {

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
    // i-k-j order: the j loop vectorizes, and every c[i][j] still
    // accumulates over k in ascending order, matching the reference
    // bit for bit.
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<size_t>(i) * k;
        for (size_t p = 0; p < k; ++p) {
            const double apv = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) {
                crow[j] += apv * brow[j];
            }
        }
    }
}

void transpose(const double* in, double* out, size_t m, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        const double* row = in + static_cast<size_t>(i) * n;
        for (size_t j = 0; j < n; ++j) {
            out[j * m + static_cast<size_t>(i)] = row[j];
        }
    }
}

namespace reference {

void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

void transpose(const double* in, double* out, size_t m, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            out[j * m + i] = in[i * n + j];
        }
    }
}

}  // namespace reference

}  // namespace meta4::kernels
