#pragma once

#include "sbmsel/graph.hpp"
#include "sbmsel/params.hpp"

namespace sbmsel {

// Complete-data log-likelihood of (labels, graph) under the Poisson block
// model, up to the constant sum_{u<v} log A_uv! that cancels in all
// comparisons:
//   sum_r n_r log gamma_r + (1/2) sum_rs (m_rs log omega_rs - T_r T_s omega_rs)
// with T_r the block sum of theta (T_r = n_r for the plain model) and the
// degree-corrected variant adding sum_u d_u log theta_u. Conventions:
// 0 log 0 = 0; data impossible under the parameters gives -infinity.
double loglik_complete_sbm(const Graph& graph, const BlockAssignment& blocks,
                           const SbmParams& params);
double loglik_complete_dc(const Graph& graph, const BlockAssignment& blocks,
                          const DcParams& params);

// Degenerate cases hit by the closed-form maximum likelihood estimates.
struct MleFlags {
  bool empty_block = false;        // some block has no nodes
  bool zero_degree_block = false;  // some occupied block has total degree 0
};

// Closed-form maximizers of the complete-data log-likelihood at fixed labels:
// gamma_r = n_r / n, omega_rs = m_rs / (n_r n_s), and for the degree-corrected
// model theta_u = d_u / mean_degree(block of u). Degenerate blocks get
// omega rows of 0 (and theta 1) with the corresponding flag set.
SbmParams mle_sbm(const Graph& graph, const BlockAssignment& blocks,
                  MleFlags* flags = nullptr);
DcParams mle_dc(const Graph& graph, const BlockAssignment& blocks,
                MleFlags* flags = nullptr);

}  // namespace sbmsel
