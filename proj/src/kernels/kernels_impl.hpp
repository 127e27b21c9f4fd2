// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace sgia::kernels::detail {

float dot_scalar(const float* a, const float* b, std::size_t n);
void axpy_scalar(float alpha, const float* x, float* y, std::size_t n);
void relu_scalar(const float* x, float* y, std::size_t n);
void relu_backward_scalar(const float* x, float* grad, std::size_t n);
void sgd_step_scalar(float* w, const float* g, std::size_t n, float lr,
                     float weight_decay, float grad_scale);
void sgd_momentum_step_scalar(float* w, float* v, const float* g, std::size_t n,
                              float lr, float weight_decay, float grad_scale,
                              float momentum);

#if defined(SGIA_HAVE_AVX2)
float dot_avx2(const float* a, const float* b, std::size_t n);
void axpy_avx2(float alpha, const float* x, float* y, std::size_t n);
void relu_avx2(const float* x, float* y, std::size_t n);
void relu_backward_avx2(const float* x, float* grad, std::size_t n);
void sgd_step_avx2(float* w, const float* g, std::size_t n, float lr,
                   float weight_decay, float grad_scale);
void sgd_momentum_step_avx2(float* w, float* v, const float* g, std::size_t n,
                            float lr, float weight_decay, float grad_scale,
                            float momentum);
#endif

#if defined(SGIA_HAVE_NEON)
float dot_neon(const float* a, const float* b, std::size_t n);
void axpy_neon(float alpha, const float* x, float* y, std::size_t n);
void relu_neon(const float* x, float* y, std::size_t n);
void relu_backward_neon(const float* x, float* grad, std::size_t n);
void sgd_step_neon(float* w, const float* g, std::size_t n, float lr,
                   float weight_decay, float grad_scale);
void sgd_momentum_step_neon(float* w, float* v, const float* g, std::size_t n,
                            float lr, float weight_decay, float grad_scale,
                            float momentum);
#endif

}  // namespace sgia::kernels::detail
