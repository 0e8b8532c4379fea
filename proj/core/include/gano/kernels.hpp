#pragma once

#include <cstddef>

namespace gano::ad::kernels {

// Dense kernels with a fixed accumulation order per output element (k
// ascending), so a row computed inside a batch is bitwise identical to the
// same row computed alone.

/// c[m x n] = a[m x k] * b[k x n]  (overwrites c)
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
/// c[m x n] += a[m x k] * b[k x n]
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n);
/// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
/// out[n x m] = in[m x n]^T
void transpose(const double* in, double* out, std::size_t m, std::size_t n);

double sigmoid(double x);
double silu(double x);

}  // namespace gano::ad::kernels
