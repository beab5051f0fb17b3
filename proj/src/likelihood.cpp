#include "sbmsel/likelihood.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sbmsel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_compatible(const Graph& graph, const BlockAssignment& blocks,
                      std::int32_t k) {
  if (blocks.labels.size() != static_cast<std::size_t>(graph.n)) {
    throw std::invalid_argument("assignment does not match graph size");
  }
  if (blocks.k != k) {
    throw std::invalid_argument("assignment and parameters disagree on k");
  }
}

// gamma term plus the pair term (1/2) sum_rs (m_rs log w - T_r T_s w).
// Returns -infinity when observed data has probability zero.
double shared_terms(const BlockAssignment& blocks, const SbmParams& params,
                    const std::vector<double>& block_theta_sum) {
  double ll = 0.0;
  for (std::int32_t r = 0; r < blocks.k; ++r) {
    const auto n_r = blocks.block_sizes[static_cast<std::size_t>(r)];
    if (n_r == 0) continue;
    const double g = params.gamma[static_cast<std::size_t>(r)];
    if (g <= 0.0) return kNegInf;
    ll += static_cast<double>(n_r) * std::log(g);
  }
  double pair = 0.0;
  for (std::int32_t r = 0; r < blocks.k; ++r) {
    for (std::int32_t s = 0; s < blocks.k; ++s) {
      const double w = params.omega_at(r, s);
      const auto m = blocks.m_rs(r, s);
      if (m > 0) {
        if (w <= 0.0) return kNegInf;
        pair += static_cast<double>(m) * std::log(w);
      }
      pair -= block_theta_sum[static_cast<std::size_t>(r)] *
              block_theta_sum[static_cast<std::size_t>(s)] * w;
    }
  }
  return ll + 0.5 * pair;
}

}  // namespace

double loglik_complete_sbm(const Graph& graph, const BlockAssignment& blocks,
                           const SbmParams& params) {
  check_compatible(graph, blocks, params.k);
  std::vector<double> block_size(static_cast<std::size_t>(blocks.k));
  for (std::int32_t r = 0; r < blocks.k; ++r) {
    block_size[static_cast<std::size_t>(r)] =
        static_cast<double>(blocks.block_sizes[static_cast<std::size_t>(r)]);
  }
  return shared_terms(blocks, params, block_size);
}

double loglik_complete_dc(const Graph& graph, const BlockAssignment& blocks,
                          const DcParams& params) {
  check_compatible(graph, blocks, params.k);
  if (params.theta.size() != static_cast<std::size_t>(graph.n)) {
    throw std::invalid_argument("theta size must equal n");
  }
  std::vector<double> theta_sum(static_cast<std::size_t>(blocks.k), 0.0);
  double degree_term = 0.0;
  for (std::int32_t u = 0; u < graph.n; ++u) {
    const auto ui = static_cast<std::size_t>(u);
    const double t = params.theta[ui];
    theta_sum[static_cast<std::size_t>(blocks.labels[ui])] += t;
    const auto d = graph.degrees[ui];
    if (d > 0) {
      if (t <= 0.0) return kNegInf;
      degree_term += static_cast<double>(d) * std::log(t);
    }
  }
  SbmParams base{params.k, params.gamma, params.omega};
  const double shared = shared_terms(blocks, base, theta_sum);
  return shared == kNegInf ? kNegInf : shared + degree_term;
}

SbmParams mle_sbm(const Graph& graph, const BlockAssignment& blocks,
                  MleFlags* flags) {
  if (blocks.labels.size() != static_cast<std::size_t>(graph.n)) {
    throw std::invalid_argument("assignment does not match graph size");
  }
  MleFlags local;
  SbmParams params;
  params.k = blocks.k;
  const auto ku = static_cast<std::size_t>(blocks.k);
  params.gamma.assign(ku, 0.0);
  params.omega.assign(ku * ku, 0.0);
  for (std::int32_t r = 0; r < blocks.k; ++r) {
    const auto n_r = blocks.block_sizes[static_cast<std::size_t>(r)];
    if (n_r == 0) local.empty_block = true;
    params.gamma[static_cast<std::size_t>(r)] =
        static_cast<double>(n_r) / static_cast<double>(graph.n);
    for (std::int32_t s = 0; s < blocks.k; ++s) {
      const auto n_s = blocks.block_sizes[static_cast<std::size_t>(s)];
      if (n_r == 0 || n_s == 0) continue;
      params.omega_at(r, s) = static_cast<double>(blocks.m_rs(r, s)) /
                              (static_cast<double>(n_r) * static_cast<double>(n_s));
    }
  }
  if (flags) *flags = local;
  return params;
}

DcParams mle_dc(const Graph& graph, const BlockAssignment& blocks,
                MleFlags* flags) {
  MleFlags local;
  SbmParams base = mle_sbm(graph, blocks, &local);
  DcParams params;
  params.k = base.k;
  params.gamma = std::move(base.gamma);
  params.omega = std::move(base.omega);
  params.theta.assign(static_cast<std::size_t>(graph.n), 1.0);
  for (std::int32_t u = 0; u < graph.n; ++u) {
    const auto ui = static_cast<std::size_t>(u);
    const auto r = static_cast<std::size_t>(blocks.labels[ui]);
    const double mean_deg = blocks.block_mean_degrees[r];
    if (mean_deg > 0.0) {
      params.theta[ui] = static_cast<double>(graph.degrees[ui]) / mean_deg;
    } else {
      local.zero_degree_block = true;  // theta stays 1: flat in the likelihood
    }
  }
  if (flags) *flags = local;
  return params;
}

}  // namespace sbmsel
