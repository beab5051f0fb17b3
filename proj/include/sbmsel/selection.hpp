#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sbmsel/bp.hpp"
#include "sbmsel/graph.hpp"
#include "sbmsel/null_moments.hpp"

namespace sbmsel {

// Which form of the model-selection statistic a test reports.
enum class StatisticKind { ground_state, free_energy };

// Which fitted partition supplies the block structure (sizes and mean
// degrees) behind the null moments and the ground-state statistic.
enum class MomentSource { h0, h1 };

struct BootstrapResult {
  std::vector<double> lambdas;   // surviving replicates, in replicate order
  double p_empirical = 1.0;      // (1 + #{lambda_b >= lambda_obs}) / (#survivors + 1)
  std::int32_t requested = 0;
  std::int32_t dropped = 0;      // replicates whose refit failed
  bool excessive_drops = false;  // dropped > 5% of requested
};

struct TestConfig {
  std::int32_t k = 2;
  StatisticKind statistic = StatisticKind::ground_state;
  // which fit's block structure defines the null moments; h0 keeps the
  // analytic p-value and the bootstrap (which samples from the h0 fit)
  // estimating the same tail
  MomentSource moments_from = MomentSource::h0;
  VarianceMode variance = VarianceMode::limiting;
  std::int32_t bootstrap = 0;  // replicate count B; 0 disables the bootstrap
  std::int32_t jobs = 1;       // bootstrap worker threads
  FitConfig fit;               // shared fit settings; kind/seed are set per model
  std::uint64_t seed = 0;
};

struct TestReport {
  double lambda = 0.0;  // the statistic selected by `statistic`
  double lambda_ground_state = 0.0;
  double lambda_free_energy = 0.0;
  StatisticKind statistic = StatisticKind::ground_state;
  MomentSource moments_from = MomentSource::h0;
  NullMoments null_moments;
  bool small_block = false;  // finite-n variance used below its valid size
  double z_score = 0.0;
  double p_gaussian = 1.0;
  std::int64_t chi2_dof = 0;  // n - k
  double p_chi2 = 1.0;
  std::optional<BootstrapResult> bootstrap;
  FitResult fit_h0;
  FitResult fit_h1;
  bool fits_converged = true;
  // fraction of nodes whose H0 and H1 ground-state labels agree under the
  // best block matching; low values mean the two models see different
  // partitions and the concentration reading of the statistic is shaky
  double ground_state_agreement = 1.0;
  std::uint64_t seed = 0;
};

// Degree form of the statistic at a fixed assignment:
//   sum_u d_u log(d_u / dbar_{g_u})
// with dbar_r the mean degree of block r, 0 log 0 = 0, and empty or
// zero-degree blocks contributing nothing. Nonnegative for every graph and
// assignment. Throws std::invalid_argument on malformed labels.
double lambda_ground_state(const Graph& graph,
                           std::span<const std::int32_t> assignment,
                           std::int32_t k);

// Evidence form: Bethe log-evidence of the degree-corrected fit minus the
// plain fit. Throws std::invalid_argument if the fits disagree on k.
double lambda_free_energy(const FitResult& fit_h0, const FitResult& fit_h1);

// Fits both models, evaluates the selected statistic, computes the null
// moments from the chosen fitted partition, and reports Gaussian and
// chi-square p-values; bootstrap > 0 appends a parametric bootstrap.
TestReport run_test(const Graph& graph, const TestConfig& cfg);

// Parametric bootstrap alone: fits both parents (same derived seeds as
// run_test), draws cfg.bootstrap graphs from the fitted plain model, refits
// both models per replicate with the parents as warm starts, and returns the
// replicate statistics with the +1-corrected empirical p-value against
// lambda_obs. Requires cfg.bootstrap >= 1.
BootstrapResult parametric_bootstrap(const Graph& graph, const TestConfig& cfg,
                                     double lambda_obs);

namespace detail {
// Bootstrap reusing already fitted parents; run_test calls this.
BootstrapResult bootstrap_with_parents(const Graph& graph,
                                       const TestConfig& cfg,
                                       const FitResult& parent_h0,
                                       const FitResult& parent_h1,
                                       double lambda_obs);
}  // namespace detail

}  // namespace sbmsel
