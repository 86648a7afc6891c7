#pragma once

#include <cstddef>

namespace hvac::nn {

/// C (+)= op(A) * op(B) for row-major operands, where op is identity or
/// transpose. M x N result, K inner dimension; lda/ldb/ldc are row strides of
/// the stored matrices.
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  const double* a = nullptr;
  std::size_t lda = 0;
  const double* b = nullptr;
  std::size_t ldb = 0;
  double* c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
};

/// Reference kernel. Each output entry is summed over k in increasing order, so
/// a row's result does not depend on how many other rows are computed.
void gemm_serial(const GemmArgs& g);
/// Output rows split across OpenMP threads; bitwise equal to gemm_serial.
void gemm_parallel(const GemmArgs& g);
/// Picks the parallel kernel once the product is large enough to pay for
/// the fork.
void gemm(const GemmArgs& g);

}  // namespace hvac::nn
