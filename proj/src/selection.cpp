#include "sbmsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

#include "sbmsel/rng.hpp"
#include "sbmsel/sampler.hpp"

namespace sbmsel {

namespace {

// Null moments from the occupied, nonzero-degree blocks of a partition.
// Empty and zero-degree blocks contribute nothing to the statistic, so they
// contribute nothing to its moments either.
struct PartitionMoments {
  NullMoments moments;
  bool small_block = false;
};

PartitionMoments moments_for(const Graph& graph,
                             std::span<const std::int32_t> labels,
                             std::int32_t k, VarianceMode mode) {
  const BlockAssignment ba = block_statistics(graph, labels, k);
  std::vector<std::int64_t> sizes;
  std::vector<double> mu;
  sizes.reserve(k);
  mu.reserve(k);
  for (std::int32_t r = 0; r < k; ++r)
    if (ba.block_sizes[r] > 0 && ba.block_mean_degrees[r] > 0.0) {
      sizes.push_back(ba.block_sizes[r]);
      mu.push_back(ba.block_mean_degrees[r]);
    }
  PartitionMoments out;
  out.moments = null_moments(sizes, mu, mode, &out.small_block);
  return out;
}

// Fraction of nodes on which two labelings agree under the best block
// matching: exact over permutations for small k, greedy above that.
double matched_agreement(std::span<const std::int32_t> a,
                         std::span<const std::int32_t> b, std::int32_t k) {
  const std::size_t n = a.size();
  if (n == 0 || n != b.size()) return 0.0;
  std::vector<std::int64_t> overlap(static_cast<std::size_t>(k) * k, 0);
  for (std::size_t u = 0; u < n; ++u) overlap[a[u] * k + b[u]] += 1;
  std::int64_t best = 0;
  if (k <= 6) {
    std::vector<std::int32_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::int64_t s = 0;
      for (std::int32_t r = 0; r < k; ++r) s += overlap[r * k + perm[r]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<bool> row(k, false), col(k, false);
    for (std::int32_t step = 0; step < k; ++step) {
      std::int64_t top = -1;
      std::int32_t tr = 0, tc = 0;
      for (std::int32_t r = 0; r < k; ++r)
        for (std::int32_t c = 0; c < k; ++c)
          if (!row[r] && !col[c] && overlap[r * k + c] > top) {
            top = overlap[r * k + c];
            tr = r;
            tc = c;
          }
      row[tr] = col[tc] = true;
      best += top;
    }
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

double replicate_lambda(const Graph& graph, const TestConfig& cfg,
                        const FitResult& h0, const FitResult& h1) {
  if (cfg.statistic == StatisticKind::free_energy)
    return lambda_free_energy(h0, h1);
  // The KL statistic lives on the alternative's partition: degree spread
  // within the fitted blocks is exactly what the test measures, and the null
  // fit tends to sort nodes by degree, which would hide it.
  return lambda_ground_state(graph, h1.ground_state, cfg.k);
}

}  // namespace

double lambda_ground_state(const Graph& graph,
                           std::span<const std::int32_t> assignment,
                           std::int32_t k) {
  const BlockAssignment ba = block_statistics(graph, assignment, k);
  double sum = 0.0;
  for (std::int32_t u = 0; u < graph.n; ++u) {
    const double d = static_cast<double>(graph.degrees[u]);
    if (d <= 0.0) continue;  // 0 log 0 = 0
    sum += d * std::log(d / ba.block_mean_degrees[assignment[u]]);
  }
  // nonnegative by Jensen; tiny negatives are rounding
  return sum > 0.0 ? sum : 0.0;
}

double lambda_free_energy(const FitResult& fit_h0, const FitResult& fit_h1) {
  if (fit_h0.k != fit_h1.k)
    throw std::invalid_argument("lambda_free_energy: fits disagree on k");
  return fit_h1.log_evidence - fit_h0.log_evidence;
}

TestReport run_test(const Graph& graph, const TestConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("run_test: k must be positive");
  if (graph.n <= cfg.k)
    throw std::invalid_argument("run_test: graph needs more than k nodes");
  if (cfg.bootstrap < 0)
    throw std::invalid_argument("run_test: negative bootstrap count");
  if (cfg.jobs < 1) throw std::invalid_argument("run_test: jobs must be positive");

  TestReport rep;
  rep.statistic = cfg.statistic;
  rep.moments_from = cfg.moments_from;
  rep.seed = cfg.seed;

  FitConfig fc = cfg.fit;
  fc.k = cfg.k;
  fc.warm.reset();
  fc.kind = ModelKind::plain;
  fc.seed = derive_seed(cfg.seed, 1);
  rep.fit_h0 = fit(graph, fc);
  fc.kind = ModelKind::degree_corrected;
  fc.seed = derive_seed(cfg.seed, 2);
  rep.fit_h1 = fit(graph, fc);
  rep.fits_converged = rep.fit_h0.converged && rep.fit_h1.converged;

  rep.lambda_ground_state =
      lambda_ground_state(graph, rep.fit_h1.ground_state, cfg.k);
  rep.lambda_free_energy = lambda_free_energy(rep.fit_h0, rep.fit_h1);
  rep.lambda = cfg.statistic == StatisticKind::ground_state
                   ? rep.lambda_ground_state
                   : rep.lambda_free_energy;

  // The moments partition is a separate choice from the statistic partition:
  // the null distribution is defined by a block structure, and by default we
  // take it from the fit of the model being tested.
  const std::vector<std::int32_t>& part = cfg.moments_from == MomentSource::h0
                                              ? rep.fit_h0.ground_state
                                              : rep.fit_h1.ground_state;
  const PartitionMoments pm = moments_for(graph, part, cfg.k, cfg.variance);
  rep.null_moments = pm.moments;
  rep.small_block = pm.small_block;
  const double sd = std::sqrt(std::max(pm.moments.variance, 0.0));
  rep.z_score = sd > 0.0 ? (rep.lambda - pm.moments.mean) / sd : 0.0;
  rep.p_gaussian =
      gaussian_pvalue(rep.lambda, pm.moments.mean, pm.moments.variance);
  rep.chi2_dof = graph.n - cfg.k;
  rep.p_chi2 = chi2_pvalue(rep.lambda, rep.chi2_dof);
  rep.ground_state_agreement = matched_agreement(
      rep.fit_h0.ground_state, rep.fit_h1.ground_state, cfg.k);

  if (cfg.bootstrap > 0)
    rep.bootstrap = detail::bootstrap_with_parents(graph, cfg, rep.fit_h0,
                                                   rep.fit_h1, rep.lambda);
  return rep;
}

namespace detail {

BootstrapResult bootstrap_with_parents(const Graph& graph,
                                       const TestConfig& cfg,
                                       const FitResult& parent_h0,
                                       const FitResult& parent_h1,
                                       double lambda_obs) {
  if (cfg.bootstrap < 1)
    throw std::invalid_argument("parametric_bootstrap: needs B >= 1");
  if (cfg.jobs < 1)
    throw std::invalid_argument("parametric_bootstrap: jobs must be positive");

  SbmParams null_model;
  null_model.k = cfg.k;
  null_model.gamma = parent_h0.gamma;
  null_model.omega = parent_h0.omega;

  const std::int32_t B = cfg.bootstrap;
  const std::uint64_t master = derive_seed(cfg.seed, 3);
  std::vector<double> lams(B, 0.0);
  std::vector<char> ok(B, 0);

  // replicate b is fully determined by derive_seed(master, b), so the
  // thread count never changes the results, only their wall time
  const auto worker = [&](std::int32_t first, std::int32_t stride) {
    for (std::int32_t b = first; b < B; b += stride) {
      const std::uint64_t rs = derive_seed(master, static_cast<std::uint64_t>(b));
      try {
        const SampledGraph rg =
            sample_sbm(graph.n, null_model, derive_seed(rs, 0));
        FitConfig fc = cfg.fit;
        fc.k = cfg.k;
        fc.restarts = 2;  // parent warm start plus one flat restart
        fc.kind = ModelKind::plain;
        fc.warm = parent_h0.internal;
        fc.seed = derive_seed(rs, 1);
        const FitResult h0 = fit(rg.graph, fc);
        fc.kind = ModelKind::degree_corrected;
        DcParams warm = parent_h1.internal;
        for (std::int32_t u = 0; u < rg.graph.n; ++u)
          warm.theta[u] = static_cast<double>(rg.graph.degrees[u]);
        fc.warm = std::move(warm);
        fc.seed = derive_seed(rs, 2);
        const FitResult h1 = fit(rg.graph, fc);
        const double lam = replicate_lambda(rg.graph, cfg, h0, h1);
        if (std::isfinite(lam) && h0.converged && h1.converged) {
          lams[b] = lam;
          ok[b] = 1;
        }
      } catch (const std::exception&) {
        // replicate dropped and counted below
      }
    }
  };

  const std::int32_t jobs = std::min(cfg.jobs, B);
  if (jobs == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::int32_t t = 0; t < jobs; ++t) pool.emplace_back(worker, t, jobs);
    for (std::thread& t : pool) t.join();
  }

  BootstrapResult out;
  out.requested = B;
  out.lambdas.reserve(B);
  for (std::int32_t b = 0; b < B; ++b)
    if (ok[b]) out.lambdas.push_back(lams[b]);
  out.dropped = B - static_cast<std::int32_t>(out.lambdas.size());
  out.excessive_drops = static_cast<std::int64_t>(out.dropped) * 20 > B;
  std::int64_t ge = 0;
  for (const double lam : out.lambdas) ge += lam >= lambda_obs;
  out.p_empirical = (1.0 + static_cast<double>(ge)) /
                    (static_cast<double>(out.lambdas.size()) + 1.0);
  return out;
}

}  // namespace detail

BootstrapResult parametric_bootstrap(const Graph& graph, const TestConfig& cfg,
                                     double lambda_obs) {
  if (cfg.bootstrap < 1)
    throw std::invalid_argument("parametric_bootstrap: needs B >= 1");
  FitConfig fc = cfg.fit;
  fc.k = cfg.k;
  fc.warm.reset();
  fc.kind = ModelKind::plain;
  fc.seed = derive_seed(cfg.seed, 1);
  const FitResult h0 = fit(graph, fc);
  fc.kind = ModelKind::degree_corrected;
  fc.seed = derive_seed(cfg.seed, 2);
  const FitResult h1 = fit(graph, fc);
  return detail::bootstrap_with_parents(graph, cfg, h0, h1, lambda_obs);
}

}  // namespace sbmsel
