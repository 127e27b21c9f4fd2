// SPDX-License-Identifier: Apache-2.0
//
// NEON variants, built only for AArch64 targets where NEON is baseline.

#include "kernels_impl.hpp"

#include <arm_neon.h>

namespace sgia::kernels::detail {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), alpha));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_neon(const float* x, float* y, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmaxq_f32(vld1q_f32(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_neon(const float* x, float* grad, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    uint32x4_t mask = vcgtq_f32(vld1q_f32(x + i), zero);
    uint32x4_t g = vandq_u32(mask, vreinterpretq_u32_f32(vld1q_f32(grad + i)));
    vst1q_f32(grad + i, vreinterpretq_f32_u32(g));
  }
  for (; i < n; ++i)
    if (!(x[i] > 0.0f)) grad[i] = 0.0f;
}

void sgd_step_neon(float* w, const float* g, std::size_t n, float lr,
                   float weight_decay, float grad_scale) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vw = vld1q_f32(w + i);
    float32x4_t step = vfmaq_n_f32(vmulq_n_f32(vld1q_f32(g + i), grad_scale), vw,
                                   weight_decay);
    vst1q_f32(w + i, vfmsq_n_f32(vw, step, lr));
  }
  for (; i < n; ++i) w[i] -= lr * (g[i] * grad_scale + weight_decay * w[i]);
}

void sgd_momentum_step_neon(float* w, float* v, const float* g, std::size_t n,
                            float lr, float weight_decay, float grad_scale,
                            float momentum) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vw = vld1q_f32(w + i);
    float32x4_t d = vfmaq_n_f32(vmulq_n_f32(vld1q_f32(g + i), grad_scale), vw,
                                weight_decay);
    float32x4_t vv = vfmaq_n_f32(d, vld1q_f32(v + i), momentum);
    vst1q_f32(v + i, vv);
    vst1q_f32(w + i, vfmsq_n_f32(vw, vv, lr));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] * grad_scale + weight_decay * w[i];
    w[i] -= lr * v[i];
  }
}

}  // namespace sgia::kernels::detail
