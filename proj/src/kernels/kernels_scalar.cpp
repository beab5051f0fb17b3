#include <cmath>
#include <cstddef>

#include "sbmsel/kernels.hpp"

namespace sbmsel::kernels {
namespace {

// Kahan-compensated accumulator; keeps long reductions order-insensitive.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double y = x - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

void vlog_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double sum_scalar(const double* x, std::size_t n) {
  Kahan acc;
  for (std::size_t i = 0; i < n; ++i) acc.add(x[i]);
  return acc.sum;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  Kahan acc;
  for (std::size_t i = 0; i < n; ++i) acc.add(x[i] * y[i]);
  return acc.sum;
}

double sum_log_scalar(const double* x, std::size_t n) {
  Kahan acc;
  for (std::size_t i = 0; i < n; ++i) acc.add(std::log(x[i]));
  return acc.sum;
}

double sum_x_log_x_scalar(const double* x, std::size_t n) {
  Kahan acc;
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) acc.add(x[i] * std::log(x[i]));
  }
  return acc.sum;
}

double sum_log_mix_scalar(const double* m, std::size_t n, const double* coeff,
                          std::size_t k) {
  Kahan acc;
  if (k == 2) {
    const double c0 = coeff[0], c1 = coeff[1];
    for (std::size_t i = 0; i < n; ++i) {
      acc.add(std::log(c0 * m[2 * i] + c1 * m[2 * i + 1]));
    }
    return acc.sum;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double mix = 0.0;
    for (std::size_t s = 0; s < k; ++s) mix += coeff[s] * m[i * k + s];
    acc.add(std::log(mix));
  }
  return acc.sum;
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend = {
      "scalar",          vlog_scalar,        vexp_scalar,
      sum_scalar,        dot_scalar,         sum_log_scalar,
      sum_x_log_x_scalar, sum_log_mix_scalar,
  };
  return backend;
}

}  // namespace sbmsel::kernels
