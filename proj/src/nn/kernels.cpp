#include "hvac/nn/kernels.hpp"

#include <algorithm>
#include <vector>

namespace hvac::nn {

namespace {

constexpr std::size_t kParallelWork = 1u << 16;

// One output row built by axpy over k, so B is streamed contiguously and
// each entry is summed in increasing k. `b` is K x N row-major. The AVX2
// clone only widens the vectors (no FMA), so results match the baseline.
__attribute__((target_clones("avx2", "default")))
void gemm_row(const GemmArgs& g, const double* b, std::size_t ldb, std::size_t i) {
  double* crow = g.c + i * g.ldc;
  if (!g.accumulate) std::fill(crow, crow + g.n, 0.0);
  for (std::size_t kk = 0; kk < g.k; ++kk) {
    const double aik = g.trans_a ? g.a[kk * g.lda + i] : g.a[i * g.lda + kk];
    if (aik == 0.0) continue;
    const double* brow = b + kk * ldb;
    for (std::size_t j = 0; j < g.n; ++j) crow[j] += aik * brow[j];
  }
}

// A transposed B is copied to K x N once so every row kernel can stream it.
const double* plain_b(const GemmArgs& g, std::vector<double>& scratch, std::size_t& ldb) {
  if (!g.trans_b) {
    ldb = g.ldb;
    return g.b;
  }
  scratch.resize(g.k * g.n);
  for (std::size_t j = 0; j < g.n; ++j) {
    for (std::size_t kk = 0; kk < g.k; ++kk) scratch[kk * g.n + j] = g.b[j * g.ldb + kk];
  }
  ldb = g.n;
  return scratch.data();
}

}  // namespace

void gemm_serial(const GemmArgs& g) {
  std::vector<double> scratch;
  std::size_t ldb = 0;
  const double* b = plain_b(g, scratch, ldb);
  for (std::size_t i = 0; i < g.m; ++i) gemm_row(g, b, ldb, i);
}

void gemm_parallel(const GemmArgs& g) {
  std::vector<double> scratch;
  std::size_t ldb = 0;
  const double* b = plain_b(g, scratch, ldb);
  const long m = static_cast<long>(g.m);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < m; ++i) gemm_row(g, b, ldb, static_cast<std::size_t>(i));
}

void gemm(const GemmArgs& g) {
  if (g.m > 1 && g.m * g.n * g.k >= kParallelWork) {
    gemm_parallel(g);
  } else {
    gemm_serial(g);
  }
}

}  // namespace hvac::nn
