#include "sbmsel/null_moments.hpp"

#include <cmath>
#include <stdexcept>

#include "sbmsel/poisson_moments.hpp"
#include "sbmsel/special.hpp"

namespace sbmsel {

namespace {

void check_blocks(std::span<const std::int64_t> sizes, std::span<const double> mu) {
  if (sizes.size() != mu.size() || sizes.empty()) {
    throw std::invalid_argument("block sizes and means must align and be nonempty");
  }
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    if (sizes[r] < 0) throw std::invalid_argument("block sizes must be nonnegative");
    if (mu[r] < 0.0 || !std::isfinite(mu[r])) {
      throw std::invalid_argument("block mean degrees must be finite and nonnegative");
    }
  }
}

}  // namespace

double lambda_mean(std::span<const std::int64_t> sizes, std::span<const double> mu) {
  check_blocks(sizes, mu);
  double total = 0.0;
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    const auto n_r = static_cast<double>(sizes[r]);
    if (n_r == 0.0 || mu[r] == 0.0) continue;
    total += n_r * f_mu(mu[r]) - f_mu(n_r * mu[r]);
  }
  return total;
}

double lambda_variance(std::span<const std::int64_t> sizes,
                       std::span<const double> mu, VarianceMode mode,
                       bool* small_block) {
  check_blocks(sizes, mu);
  if (small_block) *small_block = false;
  double total = 0.0;
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    const auto n_r = static_cast<double>(sizes[r]);
    if (n_r == 0.0 || mu[r] == 0.0) continue;
    if (mode == VarianceMode::limiting) {
      total += n_r * v_mu(mu[r]);
      continue;
    }
    if (small_block && sizes[r] < 100) *small_block = true;
    const double big = n_r * mu[r];
    const double log_n = std::log(n_r);
    const DlogDMoments one = dlogd_moments(mu[r]);
    const DlogDMoments sum = dlogd_moments(big);
    // Var(sum X_u) + Var(S log S) + log^2(n_r) Var(S)
    //   - 2 Cov(sum X_u, S log S) + 2 log(n_r) (Cov(sum X_u, S) - Cov(S log S, S))
    total += n_r * one.phi + sum.phi + big * log_n * log_n -
             2.0 * n_r * r_mu_psi_large_n(mu[r], big) +
             2.0 * log_n * (n_r * one.c - sum.c);
  }
  return total;
}

NullMoments null_moments(std::span<const std::int64_t> sizes,
                         std::span<const double> mu, VarianceMode mode,
                         bool* small_block) {
  return {lambda_mean(sizes, mu), lambda_variance(sizes, mu, mode, small_block)};
}

double gaussian_pvalue(double lambda, double mean, double variance) {
  if (!(variance > 0.0)) return lambda > mean ? 0.0 : 1.0;
  return normal_upper_tail((lambda - mean) / std::sqrt(variance));
}

double chi2_pvalue(double lambda, std::int64_t dof) {
  if (dof < 1) throw std::invalid_argument("chi2_pvalue needs dof >= 1");
  if (lambda <= 0.0) return 1.0;
  const auto d = static_cast<double>(dof);
  if (d > 1e5) {
    // Wilson-Hilferty cube-root normalization of chi2 with 2 lambda observed
    const double u = 2.0 * lambda / d;
    const double sig = std::sqrt(2.0 / (9.0 * d));
    return normal_upper_tail((std::cbrt(u) - (1.0 - 2.0 / (9.0 * d))) / sig);
  }
  return regularized_gamma_q(d / 2.0, lambda);
}

std::optional<std::int64_t> chi2_failure_n(double mean_degree, double alpha,
                                           double confidence, std::int32_t k,
                                           ThresholdMode mode,
                                           std::int64_t cap) {
  if (!(mean_degree > 0.0)) throw std::invalid_argument("mean degree must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("confidence must lie in (0, 1)");
  }
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (cap <= k + 1) throw std::invalid_argument("cap too small");

  const double z = normal_quantile(confidence);
  const double f_one = f_mu(mean_degree);
  const double v_one = v_mu(mean_degree);
  const auto kd = static_cast<double>(k);

  // Equal blocks of n/k nodes, treated continuously; the lower confidence
  // envelope of Lambda against the relevant chi-square landmark.
  auto fails = [&](std::int64_t n) {
    const auto nd = static_cast<double>(n);
    const double mean = nd * f_one - kd * f_mu(nd * mean_degree / kd);
    const double envelope = mean - z * std::sqrt(nd * v_one);
    const auto dof = n - static_cast<std::int64_t>(k);
    if (dof < 1) return false;
    if (mode == ThresholdMode::center) {
      return envelope >= static_cast<double>(dof) / 2.0;
    }
    return chi2_pvalue(envelope, dof) <= alpha;
  };

  // exponential bracket, then smallest failing n by bisection
  std::int64_t lo = k + 1;  // fails() is false here (dof < 1 or tiny)
  std::int64_t hi = 2 * (k + 1);
  while (hi < cap && !fails(hi)) {
    lo = hi;
    hi *= 2;
  }
  if (hi >= cap) {
    hi = cap;
    if (!fails(hi)) return std::nullopt;
  }
  while (lo + 1 < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (fails(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace sbmsel
