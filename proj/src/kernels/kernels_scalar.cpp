// SPDX-License-Identifier: Apache-2.0

#include "kernels_impl.hpp"

namespace sgia::kernels::detail {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float sum = 0.0f;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(const float* x, float* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(x[i] > 0.0f)) grad[i] = 0.0f;
}

void sgd_step_scalar(float* w, const float* g, std::size_t n, float lr,
                     float weight_decay, float grad_scale) {
  for (std::size_t i = 0; i < n; ++i)
    w[i] -= lr * (g[i] * grad_scale + weight_decay * w[i]);
}

void sgd_momentum_step_scalar(float* w, float* v, const float* g, std::size_t n,
                              float lr, float weight_decay, float grad_scale,
                              float momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + g[i] * grad_scale + weight_decay * w[i];
    w[i] -= lr * v[i];
  }
}

}  // namespace sgia::kernels::detail
