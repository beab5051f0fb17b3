#include "sbmsel/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sbmsel {

namespace {

void check_shape(std::int32_t k, const std::vector<double>& gamma,
                 const std::vector<double>& omega) {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  const auto ku = static_cast<std::size_t>(k);
  if (gamma.size() != ku) throw std::invalid_argument("gamma size must equal k");
  if (omega.size() != ku * ku) throw std::invalid_argument("omega size must equal k*k");
  double total = 0.0;
  for (double g : gamma) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw std::invalid_argument("gamma entries must be finite and nonnegative");
    }
    total += g;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "gamma must sum to 1, got " << total;
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t r = 0; r < ku; ++r) {
    for (std::size_t s = 0; s < ku; ++s) {
      const double w = omega[r * ku + s];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("omega entries must be finite and nonnegative");
      }
      const double wt = omega[s * ku + r];
      if (std::abs(w - wt) > 1e-12 * std::max(1.0, std::abs(w))) {
        throw std::invalid_argument("omega must be symmetric");
      }
    }
  }
}

}  // namespace

void validate(const SbmParams& params) {
  check_shape(params.k, params.gamma, params.omega);
}

void validate(const DcParams& params) {
  check_shape(params.k, params.gamma, params.omega);
  for (double t : params.theta) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("theta entries must be finite and nonnegative");
    }
  }
}

std::vector<double> expected_degrees(const SbmParams& params, std::int64_t n) {
  validate(params);
  std::vector<double> mu(static_cast<std::size_t>(params.k), 0.0);
  for (std::int32_t r = 0; r < params.k; ++r) {
    double acc = 0.0;
    for (std::int32_t s = 0; s < params.k; ++s) {
      acc += params.gamma[static_cast<std::size_t>(s)] * params.omega_at(r, s);
    }
    mu[static_cast<std::size_t>(r)] = static_cast<double>(n) * acc;
  }
  return mu;
}

SbmParams planted_params(std::int64_t n, std::int32_t k, double mean_degree,
                         double ratio) {
  if (n <= 0 || k <= 0) throw std::invalid_argument("n and k must be positive");
  if (mean_degree < 0.0 || ratio < 0.0) {
    throw std::invalid_argument("mean degree and ratio must be nonnegative");
  }
  // Equal blocks: mu = (n/k) * omega_in * (1 + (k-1) * ratio).
  const double omega_in = static_cast<double>(k) * mean_degree /
                          (static_cast<double>(n) * (1.0 + (k - 1) * ratio));
  SbmParams params;
  params.k = k;
  params.gamma.assign(static_cast<std::size_t>(k), 1.0 / k);
  params.omega.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k),
                      omega_in * ratio);
  for (std::int32_t r = 0; r < k; ++r) params.omega_at(r, r) = omega_in;
  return params;
}

}  // namespace sbmsel
