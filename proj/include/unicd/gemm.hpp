#pragma once

#include <cstdint>

namespace unicd {

// C[m,n] (+)= A*B with row-major dense buffers. The _nn/_nt/_tn suffix says
// whether each operand is used as stored or transposed:
//   gemm_nn: A[m,k]  B[k,n]
//   gemm_nt: A[m,k]  B[n,k]   (B transposed)
//   gemm_tn: A[k,m]  B[k,n]   (A transposed)
// When accumulate is false C is overwritten, otherwise the product is added.
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate = false);
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate = false);
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate = false);

} // namespace unicd
