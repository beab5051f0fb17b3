#include "sbmsel/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "sbmsel/rng.hpp"

namespace sbmsel {

namespace {

std::vector<std::int32_t> draw_labels(std::int32_t n, const SbmParams& params,
                                      std::mt19937_64& rng) {
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  for (auto& g : labels) {
    const double u = uniform01(rng);
    double cdf = 0.0;
    g = params.k - 1;  // absorbs rounding at the top of the CDF
    for (std::int32_t r = 0; r < params.k; ++r) {
      cdf += params.gamma[static_cast<std::size_t>(r)];
      if (u < cdf) {
        g = r;
        break;
      }
    }
  }
  return labels;
}

std::vector<double> draw_thetas(std::int32_t n, const ThetaRule& rule,
                                std::mt19937_64& rng) {
  std::vector<double> theta(static_cast<std::size_t>(n), 1.0);
  switch (rule.kind) {
    case ThetaRule::Kind::constant:
      break;
    case ThetaRule::Kind::two_point: {
      if (rule.value_a < 0.0 || rule.value_b < 0.0 ||
          rule.value_a + rule.value_b <= 0.0) {
        throw std::invalid_argument("two_point values must be nonnegative, not both zero");
      }
      if (rule.frac_a < 0.0 || rule.frac_a > 1.0) {
        throw std::invalid_argument("two_point frac_a must lie in [0, 1]");
      }
      for (auto& t : theta) {
        t = uniform01(rng) < rule.frac_a ? rule.value_a : rule.value_b;
      }
      break;
    }
    case ThetaRule::Kind::power_law: {
      if (rule.exponent <= 1.0 || rule.floor <= 0.0) {
        throw std::invalid_argument("power_law needs exponent > 1 and floor > 0");
      }
      const double inv = -1.0 / (rule.exponent - 1.0);
      for (auto& t : theta) {
        // 1 - u lies in (0, 1], so the power stays finite.
        t = rule.floor * std::pow(1.0 - uniform01(rng), inv);
      }
      break;
    }
  }
  return theta;
}

// Shared core: labels and (unnormalized) thetas are fixed; draws the
// multigraph by block-pair Poisson totals plus theta-weighted placement.
// Exact: per-pair counts are independent Poisson(theta_u theta_v omega).
SampledGraph assemble(std::int32_t n, const SbmParams& params,
                      std::vector<std::int32_t> labels,
                      std::vector<double> theta, std::mt19937_64& rng) {
  const std::int32_t k = params.k;
  std::vector<std::vector<std::int32_t>> members(static_cast<std::size_t>(k));
  for (std::int32_t u = 0; u < n; ++u) {
    members[static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])].push_back(u);
  }

  // Renormalize propensities to mean 1 within each block; after this the
  // block sums equal the block sizes.
  for (std::int32_t r = 0; r < k; ++r) {
    const auto& nodes = members[static_cast<std::size_t>(r)];
    if (nodes.empty()) continue;
    double total = 0.0;
    for (std::int32_t u : nodes) total += theta[static_cast<std::size_t>(u)];
    if (total <= 0.0) {
      throw std::invalid_argument("theta must have positive sum in every occupied block");
    }
    const double scale = static_cast<double>(nodes.size()) / total;
    for (std::int32_t u : nodes) theta[static_cast<std::size_t>(u)] *= scale;
  }

  std::vector<double> sq_sum(static_cast<std::size_t>(k), 0.0);
  for (std::int32_t r = 0; r < k; ++r) {
    for (std::int32_t u : members[static_cast<std::size_t>(r)]) {
      const double t = theta[static_cast<std::size_t>(u)];
      sq_sum[static_cast<std::size_t>(r)] += t * t;
    }
  }

  std::vector<AliasTable> pickers(static_cast<std::size_t>(k));
  std::vector<bool> built(static_cast<std::size_t>(k), false);
  auto picker = [&](std::int32_t r) -> const AliasTable& {
    if (!built[static_cast<std::size_t>(r)]) {
      std::vector<double> weights;
      weights.reserve(members[static_cast<std::size_t>(r)].size());
      for (std::int32_t u : members[static_cast<std::size_t>(r)]) {
        weights.push_back(theta[static_cast<std::size_t>(u)]);
      }
      pickers[static_cast<std::size_t>(r)] = AliasTable(weights);
      built[static_cast<std::size_t>(r)] = true;
    }
    return pickers[static_cast<std::size_t>(r)];
  };

  std::vector<Edge> edges;
  for (std::int32_t r = 0; r < k; ++r) {
    const auto& nodes_r = members[static_cast<std::size_t>(r)];
    if (nodes_r.empty()) continue;
    const auto size_r = static_cast<double>(nodes_r.size());
    for (std::int32_t s = r; s < k; ++s) {
      const auto& nodes_s = members[static_cast<std::size_t>(s)];
      if (nodes_s.empty()) continue;
      const double w = params.omega_at(r, s);
      if (w <= 0.0) continue;
      const double mean =
          r == s ? w * (size_r * size_r - sq_sum[static_cast<std::size_t>(r)]) / 2.0
                 : w * size_r * static_cast<double>(nodes_s.size());
      const std::int64_t total = poisson_draw(rng, mean);
      if (total == 0) continue;
      const AliasTable& pick_r = picker(r);
      const AliasTable& pick_s = picker(s);
      for (std::int64_t e = 0; e < total; ++e) {
        std::int32_t u, v;
        do {
          u = nodes_r[static_cast<std::size_t>(pick_r.sample(rng))];
          v = nodes_s[static_cast<std::size_t>(pick_s.sample(rng))];
        } while (u == v);
        edges.push_back({std::min(u, v), std::max(u, v), 1});
      }
    }
  }

  SampledGraph out;
  out.graph = build_graph(n, std::move(edges));
  out.labels = std::move(labels);
  out.theta = std::move(theta);
  return out;
}

}  // namespace

SampledGraph sample_sbm(std::int32_t n, const SbmParams& params,
                        std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("n must be positive");
  validate(params);
  std::mt19937_64 rng(splitmix64(seed));
  auto labels = draw_labels(n, params, rng);
  return assemble(n, params, std::move(labels),
                  std::vector<double>(static_cast<std::size_t>(n), 1.0), rng);
}

SampledGraph sample_dcsbm(std::int32_t n, const SbmParams& params,
                          const ThetaRule& rule, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("n must be positive");
  validate(params);
  std::mt19937_64 rng(splitmix64(seed));
  auto labels = draw_labels(n, params, rng);
  auto theta = draw_thetas(n, rule, rng);
  return assemble(n, params, std::move(labels), std::move(theta), rng);
}

SampledGraph sample_dcsbm(std::int32_t n, const SbmParams& params,
                          std::span<const double> theta, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("n must be positive");
  validate(params);
  if (theta.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("theta size must equal n");
  }
  for (double t : theta) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("theta entries must be finite and nonnegative");
    }
  }
  std::mt19937_64 rng(splitmix64(seed));
  auto labels = draw_labels(n, params, rng);
  return assemble(n, params, std::move(labels),
                  std::vector<double>(theta.begin(), theta.end()), rng);
}

}  // namespace sbmsel
