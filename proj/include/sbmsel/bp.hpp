#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sbmsel/graph.hpp"
#include "sbmsel/params.hpp"

namespace sbmsel {

// Single Poisson pair factor: P(a | theta_u theta_v omega), including the
// 1/a! normalization so factors compose into a proper likelihood.
double pair_factor(std::int64_t a, double theta_u, double theta_v, double omega);

struct BpConfig {
  double tol = 1e-8;             // max message change for convergence
  std::int32_t max_sweeps = 200;
  double damping = 0.1;          // new = (1 - damping) new + damping old
  double init_jitter = 0.1;      // relative jitter on initial messages
  std::int32_t dense_threshold = 64;  // at most this many nodes: exact dense messages
  std::uint64_t seed = 0;        // jitter and sweep order
};

// Message-passing state. Sparse mode keeps one message per directed adjacency
// slot (aligned with Graph CSR); non-neighbor influence flows through a
// per-sweep snapshot of the marginals. Dense mode (small n) keeps messages
// for every ordered pair and is exact in the Bethe sense.
struct BpState {
  std::int32_t n = 0;
  std::int32_t k = 0;
  bool dense = false;
  std::vector<double> messages;   // slot-major, k per slot
  std::vector<double> marginals;  // n * k, row-major
  std::int32_t sweeps = 0;
  double last_change = 0.0;
  bool converged = false;

  // propensity classes: nodes grouped by exact theta value
  std::vector<std::int32_t> class_of;
  std::vector<double> class_theta;
  std::vector<std::int32_t> class_nodes;   // nodes sorted by class
  std::vector<std::int32_t> class_offset;  // per-class ranges into class_nodes
  std::vector<std::int64_t> slot_of_edge;  // edge id -> CSR slot of (u -> v), u < v
  std::vector<std::int32_t> order;         // sweep order

  double* message(std::int64_t slot) { return messages.data() + slot * k; }
  const double* message(std::int64_t slot) const { return messages.data() + slot * k; }
  double* marginal(std::int32_t u) { return marginals.data() + static_cast<std::int64_t>(u) * k; }
  const double* marginal(std::int32_t u) const {
    return marginals.data() + static_cast<std::int64_t>(u) * k;
  }
};

// Fresh state for the given parameters: near-uniform jittered messages and
// marginals, propensity classes derived from params.theta.
BpState init_bp(const Graph& graph, const DcParams& params, const BpConfig& cfg);

// One asynchronous sweep (all nodes, seed-shuffled order, live messages).
// Returns the largest absolute message change.
double bp_sweep(const Graph& graph, const DcParams& params, BpState& state,
                const BpConfig& cfg);

// Sweeps until the change drops below cfg.tol or cfg.max_sweeps is spent.
void run_bp(const Graph& graph, const DcParams& params, BpState& state,
            const BpConfig& cfg);

// Joint label beliefs on every edge: m blocks of k*k, row = label of the
// smaller endpoint. Rows follow graph.edges order.
std::vector<double> pair_beliefs(const Graph& graph, const DcParams& params,
                                 const BpState& state);

// Expected sufficient statistics under the current beliefs.
struct EmStats {
  std::vector<double> gamma;      // n_bar / n
  std::vector<double> omega;      // m_bar / (n_bar n_bar), block-size convention
  std::vector<double> n_bar;      // expected block sizes
  std::vector<double> m_bar;      // expected edge counts, diagonal doubled
  std::vector<double> kappa_bar;  // degree-weighted block masses
};
EmStats em_update(const Graph& graph, const DcParams& params, const BpState& state);

// Bethe log-evidence at the current messages. Dense mode sums every pair
// exactly; sparse mode sums non-edge pairs exactly up to 2048 nodes and uses
// a first-order closure beyond that.
double bethe_free_energy(const Graph& graph, const DcParams& params,
                         const BpState& state);

namespace detail {
// Sparse-mode evaluation with the non-edge branch forced; the two branches
// must agree closely wherever both are affordable (see test_bp).
double bethe_free_energy_sparse(const Graph& graph, const DcParams& params,
                                const BpState& state, bool exact_nonedge);
}  // namespace detail

enum class ModelKind { plain, degree_corrected };

struct FitConfig {
  std::int32_t k = 2;
  ModelKind kind = ModelKind::plain;
  std::int32_t restarts = 5;
  std::int32_t max_em_iters = 50;
  double em_tol = 1e-6;  // max relative parameter change
  BpConfig bp;
  std::uint64_t seed = 0;
  // restart 0 starts from these internal parameters instead of random ones
  std::optional<DcParams> warm;
};

struct FitResult {
  ModelKind kind = ModelKind::plain;
  std::int32_t k = 0;
  std::vector<double> gamma;
  std::vector<double> omega;  // block-size convention
  std::vector<double> theta;  // per-block mean 1; empty for the plain model
  std::vector<double> marginals;
  std::vector<std::int32_t> ground_state;
  double log_evidence = 0.0;
  std::int32_t restarts_used = 0;
  bool converged = false;             // final BP run converged
  bool resurrected = false;           // a dying block was reseeded
  bool monotonicity_violated = false; // EM objective decreased measurably
  DcParams internal;                  // parameterization BP actually ran with
};

// Full EM fit: repeated (run_bp, em_update) under random restarts, best
// restart by Bethe log-evidence.
FitResult fit(const Graph& graph, const FitConfig& cfg);

}  // namespace sbmsel
