// SPDX-License-Identifier: Apache-2.0

#include "sgia/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace sgia::kernels {

using namespace detail;

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",          dot_scalar,
                                 axpy_scalar,       relu_scalar,
                                 relu_backward_scalar, sgd_step_scalar,
                                 sgd_momentum_step_scalar};
  return table;
}

const KernelTable* avx2_table() {
#if defined(SGIA_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  static const KernelTable table{"avx2",          dot_avx2,
                                 axpy_avx2,       relu_avx2,
                                 relu_backward_avx2, sgd_step_avx2,
                                 sgd_momentum_step_avx2};
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(SGIA_HAVE_NEON)
  static const KernelTable table{"neon",          dot_neon,
                                 axpy_neon,       relu_neon,
                                 relu_backward_neon, sgd_step_neon,
                                 sgd_momentum_step_neon};
  return &table;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("SGIA_SIMD");
  if (forced != nullptr && *forced != '\0') {
    const std::string want = forced;
    if (want == "scalar") return scalar_table();
    if (want == "avx2" && avx2_table() != nullptr) return *avx2_table();
    if (want == "neon" && neon_table() != nullptr) return *neon_table();
    throw std::runtime_error("SGIA_SIMD=" + want + " is not available on this CPU");
  }
  if (const auto* t = avx2_table()) return *t;
  if (const auto* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace sgia::kernels
