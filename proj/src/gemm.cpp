#include "gemm.hpp"

#include <Eigen/Core>

namespace anogan::detail {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

template <typename L, typename R>
void assign(Map& out, const L& lhs, const R& rhs, float alpha, float beta) {
  if (beta == 0.0f) {
    if (alpha == 1.0f) {
      out.noalias() = lhs * rhs;
    } else {
      out.noalias() = alpha * (lhs * rhs);
    }
  } else {
    if (beta != 1.0f) out *= beta;
    if (alpha == 1.0f) {
      out.noalias() += lhs * rhs;
    } else {
      out.noalias() += alpha * (lhs * rhs);
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Map out(c, M, N);
  if (k == 0) {
    if (beta == 0.0f) out.setZero(); else out *= beta;
    return;
  }
  if (!trans_a && !trans_b) {
    assign(out, ConstMap(a, M, K), ConstMap(b, K, N), alpha, beta);
  } else if (trans_a && !trans_b) {
    assign(out, ConstMap(a, K, M).transpose(), ConstMap(b, K, N), alpha, beta);
  } else if (!trans_a && trans_b) {
    assign(out, ConstMap(a, M, K), ConstMap(b, N, K).transpose(), alpha, beta);
  } else {
    assign(out, ConstMap(a, K, M).transpose(), ConstMap(b, N, K).transpose(), alpha, beta);
  }
}

}  // namespace anogan::detail
