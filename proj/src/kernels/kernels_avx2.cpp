// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime feature check.

#include "kernels_impl.hpp"

#include <immintrin.h>

namespace sgia::kernels::detail {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_avx2(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* x, float* grad, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(grad + i, _mm256_and_ps(mask, _mm256_loadu_ps(grad + i)));
  }
  for (; i < n; ++i)
    if (!(x[i] > 0.0f)) grad[i] = 0.0f;
}

void sgd_step_avx2(float* w, const float* g, std::size_t n, float lr,
                   float weight_decay, float grad_scale) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vwd = _mm256_set1_ps(weight_decay);
  const __m256 vgs = _mm256_set1_ps(grad_scale);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vw = _mm256_loadu_ps(w + i);
    __m256 step = _mm256_fmadd_ps(vwd, vw, _mm256_mul_ps(_mm256_loadu_ps(g + i), vgs));
    _mm256_storeu_ps(w + i, _mm256_fnmadd_ps(vlr, step, vw));
  }
  for (; i < n; ++i) w[i] -= lr * (g[i] * grad_scale + weight_decay * w[i]);
}

void sgd_momentum_step_avx2(float* w, float* v, const float* g, std::size_t n,
                            float lr, float weight_decay, float grad_scale,
                            float momentum) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vwd = _mm256_set1_ps(weight_decay);
  const __m256 vgs = _mm256_set1_ps(grad_scale);
  const __m256 vmom = _mm256_set1_ps(momentum);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vw = _mm256_loadu_ps(w + i);
    __m256 d = _mm256_fmadd_ps(vwd, vw, _mm256_mul_ps(_mm256_loadu_ps(g + i), vgs));
    __m256 vv = _mm256_fmadd_ps(vmom, _mm256_loadu_ps(v + i), d);
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(w + i, _mm256_fnmadd_ps(vlr, vv, vw));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] * grad_scale + weight_decay * w[i];
    w[i] -= lr * v[i];
  }
}

}  // namespace sgia::kernels::detail
