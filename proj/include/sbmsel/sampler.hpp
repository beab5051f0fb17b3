#pragma once

#include <cstdint>

#include "sbmsel/graph.hpp"
#include "sbmsel/params.hpp"

namespace sbmsel {

// A generated graph plus the planted structure that produced it.
struct SampledGraph {
  Graph graph;
  std::vector<std::int32_t> labels;
  std::vector<double> theta;  // all ones for plain SBM draws
};

// Draws a Poisson multigraph: labels iid from gamma, then independent
// A_uv ~ Poisson(omega_{g_u g_v}) for u < v. Runs in O(n + m) via block-pair
// totals, so omega may be dense or sparse. Same seed gives identical output.
SampledGraph sample_sbm(std::int32_t n, const SbmParams& params,
                        std::uint64_t seed);

// Degree-corrected draw: thetas come from `rule`, are renormalized to mean 1
// within each block, then A_uv ~ Poisson(theta_u theta_v omega_{g_u g_v}).
SampledGraph sample_dcsbm(std::int32_t n, const SbmParams& params,
                          const ThetaRule& rule, std::uint64_t seed);

// Degree-corrected draw with explicit propensities (renormalized per block).
SampledGraph sample_dcsbm(std::int32_t n, const SbmParams& params,
                          std::span<const double> theta, std::uint64_t seed);

}  // namespace sbmsel
