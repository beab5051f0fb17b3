#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sbmsel {

// Block model parameters. omega is k*k row-major and symmetric; gamma sums
// to 1. omega_rs is the expected multiplicity of a single (u, v) pair, so for
// sparse graphs omega scales like 1/n.
struct SbmParams {
  std::int32_t k = 0;
  std::vector<double> gamma;
  std::vector<double> omega;

  double omega_at(std::int32_t r, std::int32_t s) const {
    return omega[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                 static_cast<std::size_t>(s)];
  }
  double& omega_at(std::int32_t r, std::int32_t s) {
    return omega[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                 static_cast<std::size_t>(s)];
  }
};

// Degree-corrected variant: per-node propensity theta. Normalization
// convention: within each block the thetas average to 1, so omega keeps the
// same meaning as in SbmParams.
struct DcParams {
  std::int32_t k = 0;
  std::vector<double> gamma;
  std::vector<double> omega;
  std::vector<double> theta;

  double omega_at(std::int32_t r, std::int32_t s) const {
    return omega[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                 static_cast<std::size_t>(s)];
  }
  double& omega_at(std::int32_t r, std::int32_t s) {
    return omega[static_cast<std::size_t>(r) * static_cast<std::size_t>(k) +
                 static_cast<std::size_t>(s)];
  }
};

// Throws std::invalid_argument on malformed parameters (sizes, negative or
// non-finite entries, gamma not summing to 1, asymmetric omega).
void validate(const SbmParams& params);
void validate(const DcParams& params);

// Expected degree of a node in each block: mu_r = n * sum_s gamma_s omega_rs.
std::vector<double> expected_degrees(const SbmParams& params, std::int64_t n);

// Equal-sized planted partition with target mean degree and ratio
// omega_out / omega_in. ratio = 1 collapses to Erdos-Renyi; ratio = 0 gives
// disconnected communities.
SbmParams planted_params(std::int64_t n, std::int32_t k, double mean_degree,
                         double ratio);

// How sample_dcsbm generates node propensities before per-block renormalization.
struct ThetaRule {
  enum class Kind { constant, two_point, power_law };
  Kind kind = Kind::constant;
  // two_point: theta = value_a with probability frac_a, else value_b.
  double value_a = 1.0;
  double value_b = 1.0;
  double frac_a = 0.5;
  // power_law: theta = floor * u^(-1 / (exponent - 1)), a Pareto tail.
  double exponent = 2.5;
  double floor = 0.2;
};

}  // namespace sbmsel
