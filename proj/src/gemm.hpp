#pragma once

#include <cstddef>

namespace anogan::detail {

// Row-major C[M,N] = alpha * op(A) * op(B) + beta * C, where op(A) is [M,K]
// and op(B) is [K,N]. With trans_a the storage of A is [K,M]; likewise for B.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c);

}  // namespace anogan::detail
