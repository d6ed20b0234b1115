#include <cstdlib>
#include <cstring>

#include "sgnn/kernels.hpp"

namespace sgnn::kernels {

#if defined(SGNN_HAVE_AVX2)
namespace detail {
const KernelTable& avx2_table();
}
#endif

const KernelTable* avx2() {
#if defined(SGNN_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* force = std::getenv("SGNN_FORCE_SCALAR");
    if (force != nullptr && std::strcmp(force, "0") != 0 && *force != '\0') return &scalar();
    const KernelTable* simd = avx2();
    return simd != nullptr ? simd : &scalar();
  }();
  return *chosen;
}

}  // namespace sgnn::kernels
