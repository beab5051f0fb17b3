#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sbmsel/kernels.hpp"

namespace sbmsel::kernels {

#if defined(SBMSEL_HAVE_AVX2_BUILD)
const Backend& avx2_backend();  // defined in kernels_avx2.cpp
#endif

bool avx2_available() {
#if defined(SBMSEL_HAVE_AVX2_BUILD)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

std::atomic<const Backend*> g_active{nullptr};

const Backend& widest_backend() {
#if defined(SBMSEL_HAVE_AVX2_BUILD)
  if (avx2_available()) return avx2_backend();
#endif
  return scalar_backend();
}

const Backend& initial_backend() {
  const char* env = std::getenv("SBMSEL_KERNELS");
  if (env != nullptr) {
    std::string_view name(env);
    if (name == "scalar") return scalar_backend();
#if defined(SBMSEL_HAVE_AVX2_BUILD)
    if (name == "avx2" && avx2_available()) return avx2_backend();
#endif
    // unknown or unavailable request: fall through to auto rather than abort
  }
  return widest_backend();
}

}  // namespace

const Backend& active_backend() {
  const Backend* b = g_active.load(std::memory_order_acquire);
  if (b == nullptr) {
    b = &initial_backend();
    g_active.store(b, std::memory_order_release);
  }
  return *b;
}

void set_backend(std::string_view name) {
  if (name == "auto") {
    g_active.store(&widest_backend(), std::memory_order_release);
    return;
  }
  if (name == "scalar") {
    g_active.store(&scalar_backend(), std::memory_order_release);
    return;
  }
  if (name == "avx2") {
    if (!avx2_available()) {
      throw std::runtime_error("avx2 kernels unavailable on this machine");
    }
#if defined(SBMSEL_HAVE_AVX2_BUILD)
    g_active.store(&avx2_backend(), std::memory_order_release);
#endif
    return;
  }
  throw std::invalid_argument("unknown kernel backend: " + std::string(name));
}

}  // namespace sbmsel::kernels
