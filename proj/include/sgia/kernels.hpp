// SPDX-License-Identifier: Apache-2.0
//
// Dense float kernels used by the classifier inner loops.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, a vectorized variant (AVX2+FMA on x86-64, NEON on AArch64).
// The active table is chosen once at first use from the CPU feature flags;
// SGIA_SIMD=scalar|avx2|neon forces a specific table.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace sgia::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y[i] = max(x[i], 0)
  void (*relu)(const float* x, float* y, std::size_t n);
  // grad[i] = (x[i] > 0) ? grad[i] : 0
  void (*relu_backward)(const float* x, float* grad, std::size_t n);
  // w[i] -= lr * (g[i] * grad_scale + weight_decay * w[i])
  void (*sgd_step)(float* w, const float* g, std::size_t n, float lr,
                   float weight_decay, float grad_scale);
  // v[i] = momentum * v[i] + g[i] * grad_scale + weight_decay * w[i];
  // w[i] -= lr * v[i]
  void (*sgd_momentum_step)(float* w, float* v, const float* g, std::size_t n,
                            float lr, float weight_decay, float grad_scale,
                            float momentum);
};

const KernelTable& scalar_table();

// Null when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table selected for this process.
const KernelTable& active();

// Convenience wrappers over active().
inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace sgia::kernels
