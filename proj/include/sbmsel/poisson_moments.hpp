#pragma once

namespace sbmsel {

// Moments of D log D for D ~ Poisson(mu), with 0 log 0 = 0:
//   f   = E[D log D] - mu log mu
//   phi = Var[D log D]
//   c   = Cov[D, D log D]
//   v   = phi + mu (1 + log mu)^2 - 2 c (1 + log mu)
// v is the variance of the residual after removing the best linear predictor
// of D log D in D, which is how it is computed (the three-term combination
// cancels catastrophically at large mu).
struct DlogDMoments {
  double f = 0.0;
  double phi = 0.0;
  double c = 0.0;
  double v = 0.0;
};

DlogDMoments dlogd_moments(double mu);

double f_mu(double mu);
double phi_mu(double mu);
double c_mu(double mu);
double v_mu(double mu);

// Large-n surrogate for Cov(sum_u D_u log D_u, S log S) per node, where S is
// the block degree total with mean psi: c(mu) * (1 + log psi).
double r_mu_psi_large_n(double mu, double psi);

// Below this mean the moments come from mode-centered pmf summation; above it
// from asymptotic series. At the switch point both branches agree to better
// than 1e-12 relative (series truncation is ~1e-17 there, and the pmf walk is
// short enough that recurrence drift stays near rounding).
inline constexpr double kMomentsCrossover = 1e6;

namespace detail {
// Both branches, exposed so the crossover can be tested for consistency.
DlogDMoments dlogd_moments_sum(double mu);
DlogDMoments dlogd_moments_series(double mu);
}  // namespace detail

}  // namespace sbmsel
