#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace sbmsel {

// Null distribution of the degree statistic
//   Lambda = sum_u d_u log d_u - sum_r D_r log(D_r / n_r)
// when degrees in block r are independent Poisson(mu_r) and D_r is the block
// total. Means and variances below are exact in that surrogate model except
// for one large-n covariance term.

double lambda_mean(std::span<const std::int64_t> sizes, std::span<const double> mu);

enum class VarianceMode { limiting, finite_n };

// limiting: sum_r n_r v(mu_r), the leading-order variance. finite_n keeps all
// block-total covariance terms; it degrades for very small blocks (the one
// surrogate is a large-n expansion), so *small_block is set when any block
// has fewer than 100 nodes.
double lambda_variance(std::span<const std::int64_t> sizes,
                       std::span<const double> mu,
                       VarianceMode mode = VarianceMode::limiting,
                       bool* small_block = nullptr);

struct NullMoments {
  double mean = 0.0;
  double variance = 0.0;
};

NullMoments null_moments(std::span<const std::int64_t> sizes,
                         std::span<const double> mu,
                         VarianceMode mode = VarianceMode::limiting,
                         bool* small_block = nullptr);

// Upper-tail p-value of lambda under Normal(mean, variance).
double gaussian_pvalue(double lambda, double mean, double variance);

// Classical p-value P(chi2_dof >= 2 lambda). Wilson-Hilferty above 1e5
// degrees of freedom, exact regularized gamma otherwise.
double chi2_pvalue(double lambda, std::int64_t dof);

// Smallest n at which the chi-square calibration breaks for k equal blocks of
// mean degree mu, or nullopt if it stays sound up to `cap`.
//   center:   the lower `confidence` envelope of Lambda passes the chi-square
//             center (n - k) / 2, so typical p-values collapse below 1/2.
//   quantile: the envelope passes the point where the chi-square p-value
//             drops below alpha, so the test rejects outright.
enum class ThresholdMode { center, quantile };

std::optional<std::int64_t> chi2_failure_n(double mean_degree, double alpha,
                                           double confidence, std::int32_t k = 2,
                                           ThresholdMode mode = ThresholdMode::center,
                                           std::int64_t cap = 50000000);

}  // namespace sbmsel
