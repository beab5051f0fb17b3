#pragma once

#include <cstddef>
#include <string_view>

namespace sbmsel::kernels {

// Hot numeric primitives with interchangeable backends. The scalar backend is
// the reference; vector backends must agree with it to tight tolerances (see
// test_kernels). All reductions use compensated (Kahan) accumulation so that
// results are insensitive to summation order at the ~1e-15 level.
struct Backend {
  const char* name;

  // out[i] = log(x[i]); x[i] <= 0 yields -inf/NaN like std::log.
  void (*vlog)(const double* x, double* out, std::size_t n);
  // out[i] = exp(x[i]); underflow clamps to 0 below exp(-708).
  void (*vexp)(const double* x, double* out, std::size_t n);

  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i log(x[i]); all x[i] must be positive.
  double (*sum_log)(const double* x, std::size_t n);
  // sum_i x[i]*log(x[i]) with 0*log(0) := 0; x[i] >= 0.
  double (*sum_x_log_x)(const double* x, std::size_t n);
  // sum_i log(sum_{s<k} coeff[s]*m[i*k+s]); every row mixture must be positive.
  double (*sum_log_mix)(const double* m, std::size_t n, const double* coeff,
                        std::size_t k);
};

const Backend& scalar_backend();

// True when the AVX2 backend was compiled in and this CPU supports AVX2+FMA.
bool avx2_available();

// Backend in use. Defaults to the widest available; the SBMSEL_KERNELS
// environment variable ("scalar" or "avx2") overrides at first use, falling
// back to scalar when the request cannot be satisfied.
const Backend& active_backend();

// Force a backend by name ("scalar", "avx2", "auto"). Throws
// std::invalid_argument on an unknown name and std::runtime_error when the
// named backend is unavailable. Not safe to call while kernels are running.
void set_backend(std::string_view name);

inline void vlog(const double* x, double* out, std::size_t n) {
  active_backend().vlog(x, out, n);
}
inline void vexp(const double* x, double* out, std::size_t n) {
  active_backend().vexp(x, out, n);
}
inline double sum(const double* x, std::size_t n) {
  return active_backend().sum(x, n);
}
inline double dot(const double* x, const double* y, std::size_t n) {
  return active_backend().dot(x, y, n);
}
inline double sum_log(const double* x, std::size_t n) {
  return active_backend().sum_log(x, n);
}
inline double sum_x_log_x(const double* x, std::size_t n) {
  return active_backend().sum_x_log_x(x, n);
}
inline double sum_log_mix(const double* m, std::size_t n, const double* coeff,
                          std::size_t k) {
  return active_backend().sum_log_mix(m, n, coeff, k);
}

}  // namespace sbmsel::kernels
