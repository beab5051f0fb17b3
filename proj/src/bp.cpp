#include "sbmsel/bp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sbmsel/kernels.hpp"
#include "sbmsel/rng.hpp"

namespace sbmsel {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Linear mixtures below this are recomputed in log space.
constexpr double kTinyMix = 1e-290;
// Per-pair log terms inside a field are clamped here so that removing one
// term from a field (the cavity) never produces inf - inf.
constexpr double kLogClamp = -700.0;
// Floor for tabulated non-edge factors; keeps every mixture row positive.
constexpr double kFactorFloor = 1e-300;
// Largest n whose non-edge Bethe contribution is summed pair by pair.
constexpr std::int32_t kExactNonedgeLimit = 2048;
// Expected block mass below this triggers a reseed during EM.
constexpr double kDeadBlockMass = 0.5;

double log_poisson_weight(std::int64_t a, double mean) {
  if (a == 0) return -mean;
  if (!(mean > 0.0)) return kNegInf;
  return static_cast<double>(a) * std::log(mean) - mean -
         std::lgamma(static_cast<double>(a) + 1.0);
}

double logsumexp_row(const double* f, std::int32_t k) {
  double m = kNegInf;
  for (std::int32_t r = 0; r < k; ++r) m = std::max(m, f[r]);
  if (!(m > kNegInf)) return kNegInf;
  double s = 0.0;
  for (std::int32_t r = 0; r < k; ++r) s += std::exp(f[r] - m);
  return m + std::log(s);
}

void softmax_row(const double* f, double* out, std::int32_t k) {
  double m = kNegInf;
  for (std::int32_t r = 0; r < k; ++r) m = std::max(m, f[r]);
  if (!(m > kNegInf)) {
    for (std::int32_t r = 0; r < k; ++r) out[r] = 1.0 / k;
    return;
  }
  double s = 0.0;
  for (std::int32_t r = 0; r < k; ++r) {
    out[r] = std::exp(f[r] - m);
    s += out[r];
  }
  for (std::int32_t r = 0; r < k; ++r) out[r] /= s;
}

// log(sum_s w[s] exp(lh[s])) with a log-space fallback when the linear pass
// underflows. clamp keeps the result finite for cavity arithmetic; Bethe pair
// terms pass clamp = false so an impossible edge stays -inf.
double log_mix(const double* w, const double* lh, std::int32_t k, bool clamp) {
  double acc = 0.0;
  for (std::int32_t s = 0; s < k; ++s) acc += w[s] * std::exp(lh[s]);
  double out;
  if (acc > kTinyMix) {
    out = std::log(acc);
  } else {
    double m = kNegInf;
    for (std::int32_t s = 0; s < k; ++s)
      if (w[s] > 0.0) m = std::max(m, std::log(w[s]) + lh[s]);
    if (!(m > kNegInf)) return clamp ? kLogClamp : kNegInf;
    double sum = 0.0;
    for (std::int32_t s = 0; s < k; ++s)
      if (w[s] > 0.0) sum += std::exp(std::log(w[s]) + lh[s] - m);
    out = m + std::log(sum);
  }
  return clamp ? std::max(out, kLogClamp) : out;
}

void check_state(const Graph& g, const DcParams& p, const BpState& st) {
  if (p.k != st.k || st.k < 1) throw std::invalid_argument("bp: k mismatch");
  if (g.n != st.n) throw std::invalid_argument("bp: graph size mismatch");
  if (p.gamma.size() != static_cast<std::size_t>(p.k) ||
      p.omega.size() != static_cast<std::size_t>(p.k) * p.k ||
      p.theta.size() != static_cast<std::size_t>(g.n))
    throw std::invalid_argument("bp: parameter sizes");
  const std::size_t slots =
      st.dense ? static_cast<std::size_t>(g.n) * g.n : g.adj_node.size();
  if (st.messages.size() != slots * st.k ||
      st.marginals.size() != static_cast<std::size_t>(g.n) * st.k)
    throw std::invalid_argument("bp: state not initialized for this graph");
}

void check_config(const BpConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("bp: tol must be positive");
  if (cfg.max_sweeps < 1) throw std::invalid_argument("bp: max_sweeps < 1");
  if (!(cfg.damping >= 0.0 && cfg.damping < 1.0))
    throw std::invalid_argument("bp: damping must lie in [0, 1)");
  if (!(cfg.init_jitter >= 0.0 && cfg.init_jitter <= 0.9))
    throw std::invalid_argument("bp: init_jitter must lie in [0, 0.9]");
}

// Per-sweep tables. The snapshot of the marginals is taken once per sweep;
// every non-neighbor term read during that sweep comes from it, so the cached
// whole-population sums and the per-neighbor corrections cancel exactly.
struct Scratch {
  std::int32_t n = 0;
  std::int32_t k = 0;
  std::int64_t classes = 0;
  std::vector<double> log_gamma;
  std::vector<double> omega;      // k*k copy
  std::vector<double> etable;     // classes^2 * k^2 non-edge factors
  std::vector<double> snapshot;   // marginals at sweep start
  std::vector<double> class_buf;  // snapshot rows grouped by class
  std::vector<double> cache;      // classes * k population sums
  std::vector<std::int64_t> dense_mult;  // n*n, dense mode only

  // work areas
  std::vector<double> field;
  std::vector<double> lh;
  std::vector<double> tmp;
  std::vector<double> em_rows;  // per-slot log edge mixes for one node

  const double* erow(std::int64_t a, std::int64_t b, std::int32_t r) const {
    return etable.data() + ((a * classes + b) * k + r) * k;
  }
};

void build_dense_mult(const Graph& g, Scratch& s) {
  const std::size_t nn = static_cast<std::size_t>(g.n) * g.n;
  s.dense_mult.assign(nn, 0);
  for (const Edge& e : g.edges) {
    s.dense_mult[static_cast<std::size_t>(e.u) * g.n + e.v] = e.mult;
    s.dense_mult[static_cast<std::size_t>(e.v) * g.n + e.u] = e.mult;
  }
}

void prepare_scratch(const Graph& g, const DcParams& p, const BpState& st,
                     Scratch& s) {
  const std::int32_t k = st.k;
  s.n = g.n;
  s.k = k;
  s.log_gamma.resize(k);
  for (std::int32_t r = 0; r < k; ++r)
    s.log_gamma[r] = p.gamma[r] > 0.0 ? std::log(p.gamma[r]) : kNegInf;
  s.omega = p.omega;
  s.field.resize(k);
  s.lh.resize(k);
  s.tmp.resize(k);
  if (st.dense) {
    build_dense_mult(g, s);
    s.em_rows.resize(static_cast<std::size_t>(g.n) * k);
    return;
  }
  const std::int64_t L = static_cast<std::int64_t>(st.class_theta.size());
  s.classes = L;
  // non-edge factors exp(-theta_a theta_b omega_rs) for every class pair
  s.etable.resize(static_cast<std::size_t>(L) * L * k * k);
  for (std::int64_t a = 0; a < L; ++a)
    for (std::int64_t b = 0; b < L; ++b) {
      const double tt = st.class_theta[a] * st.class_theta[b];
      double* row = s.etable.data() + (a * L + b) * k * k;
      for (std::int32_t rs = 0; rs < k * k; ++rs) row[rs] = -tt * s.omega[rs];
    }
  kernels::vexp(s.etable.data(), s.etable.data(), s.etable.size());
  for (double& e : s.etable) e = std::max(e, kFactorFloor);
  // population sums over the snapshot, grouped by propensity class
  s.snapshot = st.marginals;
  s.class_buf.resize(s.snapshot.size());
  for (std::int32_t i = 0; i < g.n; ++i) {
    const std::int32_t u = st.class_nodes[i];
    std::copy_n(s.snapshot.data() + static_cast<std::size_t>(u) * k, k,
                s.class_buf.data() + static_cast<std::size_t>(i) * k);
  }
  s.cache.resize(static_cast<std::size_t>(L) * k);
  for (std::int64_t b = 0; b < L; ++b)
    for (std::int32_t r = 0; r < k; ++r) {
      double acc = 0.0;
      for (std::int64_t a = 0; a < L; ++a) {
        const std::int64_t lo = st.class_offset[a];
        const std::int64_t cnt = st.class_offset[a + 1] - lo;
        if (cnt == 0) continue;
        acc += kernels::sum_log_mix(s.class_buf.data() + lo * k,
                                    static_cast<std::size_t>(cnt),
                                    s.erow(a, b, r), k);
      }
      s.cache[b * k + r] = acc;
    }
}

// Field of node u under the sparse scheme: prior, population term from the
// snapshot minus its own and its neighbors' snapshot contributions, plus live
// edge messages. Fills s.em_rows with the per-slot log edge mixes.
void node_field_sparse(const Graph& g, const DcParams& p, const BpState& st,
                       Scratch& s, std::int32_t u) {
  const std::int32_t k = st.k;
  const std::int64_t cu = st.class_of[u];
  const double tu = p.theta[u];
  const double* snap_u = s.snapshot.data() + static_cast<std::size_t>(u) * k;
  for (std::int32_t r = 0; r < k; ++r) {
    const double* er = s.erow(cu, cu, r);
    double self = 0.0;
    for (std::int32_t c = 0; c < k; ++c) self += snap_u[c] * er[c];
    s.field[r] = s.log_gamma[r] + s.cache[cu * k + r] -
                 std::max(std::log(self), kLogClamp);
  }
  const std::int64_t lo = g.adj_offset[u];
  const std::int64_t hi = g.adj_offset[u + 1];
  s.em_rows.resize(static_cast<std::size_t>(hi - lo) * k);
  for (std::int64_t e = lo; e < hi; ++e) {
    const std::int32_t v = g.adj_node[e];
    const std::int64_t a = g.adj_mult[e];
    const double tt = tu * p.theta[v];
    const std::int64_t cv = st.class_of[v];
    const double* win = st.message(g.adj_reverse[e]);
    const double* snap_v = s.snapshot.data() + static_cast<std::size_t>(v) * k;
    double* em = s.em_rows.data() + (e - lo) * k;
    for (std::int32_t r = 0; r < k; ++r) {
      for (std::int32_t c = 0; c < k; ++c)
        s.lh[c] = log_poisson_weight(a, tt * s.omega[r * k + c]);
      em[r] = log_mix(win, s.lh.data(), k, true);
      const double* er = s.erow(cv, cu, r);
      double ne = 0.0;
      for (std::int32_t c = 0; c < k; ++c) ne += snap_v[c] * er[c];
      s.field[r] += em[r] - std::max(std::log(ne), kLogClamp);
    }
  }
}

// Field of node u under the dense scheme: every other node contributes its
// live message through the exact pair factor. Fills s.em_rows (n rows).
void node_field_dense(const Graph& g, const DcParams& p, const BpState& st,
                      Scratch& s, std::int32_t u) {
  const std::int32_t k = st.k;
  const std::int32_t n = g.n;
  const double tu = p.theta[u];
  for (std::int32_t r = 0; r < k; ++r) s.field[r] = s.log_gamma[r];
  for (std::int32_t v = 0; v < n; ++v) {
    if (v == u) continue;
    const std::int64_t a = s.dense_mult[static_cast<std::size_t>(u) * n + v];
    const double tt = tu * p.theta[v];
    const double* win = st.message(static_cast<std::int64_t>(v) * n + u);
    double* em = s.em_rows.data() + static_cast<std::size_t>(v) * k;
    for (std::int32_t r = 0; r < k; ++r) {
      for (std::int32_t c = 0; c < k; ++c)
        s.lh[c] = log_poisson_weight(a, tt * s.omega[r * k + c]);
      em[r] = log_mix(win, s.lh.data(), k, true);
      s.field[r] += em[r];
    }
  }
}

double damp_into(double* msg, const double* cand, std::int32_t k,
                 double damping) {
  double change = 0.0;
  for (std::int32_t r = 0; r < k; ++r) {
    const double nv = (1.0 - damping) * cand[r] + damping * msg[r];
    change = std::max(change, std::abs(nv - msg[r]));
    msg[r] = nv;
  }
  return change;
}

double sweep_impl(const Graph& g, const DcParams& p, BpState& st,
                  const BpConfig& cfg, Scratch& s) {
  prepare_scratch(g, p, st, s);
  const std::int32_t k = st.k;
  double change = 0.0;
  std::vector<double> cand(k), prob(k);
  for (const std::int32_t u : st.order) {
    if (st.dense) {
      node_field_dense(g, p, st, s, u);
      for (std::int32_t v = 0; v < g.n; ++v) {
        if (v == u) continue;
        const double* em = s.em_rows.data() + static_cast<std::size_t>(v) * k;
        for (std::int32_t r = 0; r < k; ++r) cand[r] = s.field[r] - em[r];
        softmax_row(cand.data(), prob.data(), k);
        change = std::max(
            change,
            damp_into(st.message(static_cast<std::int64_t>(u) * g.n + v),
                      prob.data(), k, cfg.damping));
      }
    } else {
      node_field_sparse(g, p, st, s, u);
      const std::int64_t lo = g.adj_offset[u];
      for (std::int64_t e = lo; e < g.adj_offset[u + 1]; ++e) {
        const double* em = s.em_rows.data() + (e - lo) * k;
        for (std::int32_t r = 0; r < k; ++r) cand[r] = s.field[r] - em[r];
        softmax_row(cand.data(), prob.data(), k);
        change = std::max(change,
                          damp_into(st.message(e), prob.data(), k, cfg.damping));
      }
    }
    softmax_row(s.field.data(), st.marginal(u), k);
  }
  return change;
}

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

// log Z of one edge: messages on both directions mixed through the factor.
double edge_log_z(const DcParams& p, const Scratch& s, const BpState& st,
                  std::int32_t u, std::int32_t v, std::int64_t a,
                  const double* mu_uv, const double* mu_vu) {
  const std::int32_t k = st.k;
  const double tt = p.theta[u] * p.theta[v];
  double acc = 0.0;
  double lse_max = kNegInf;
  for (std::int32_t r = 0; r < k; ++r) {
    if (!(mu_uv[r] > 0.0)) continue;
    for (std::int32_t c = 0; c < k; ++c) {
      if (!(mu_vu[c] > 0.0)) continue;
      const double lw = log_poisson_weight(a, tt * s.omega[r * k + c]) +
                        std::log(mu_uv[r]) + std::log(mu_vu[c]);
      lse_max = std::max(lse_max, lw);
      acc += std::exp(lw);
    }
  }
  if (acc > kTinyMix) return std::log(acc);
  if (!(lse_max > kNegInf)) return kNegInf;
  double sum = 0.0;
  for (std::int32_t r = 0; r < k; ++r) {
    if (!(mu_uv[r] > 0.0)) continue;
    for (std::int32_t c = 0; c < k; ++c) {
      if (!(mu_vu[c] > 0.0)) continue;
      sum += std::exp(log_poisson_weight(a, tt * s.omega[r * k + c]) +
                      std::log(mu_uv[r]) + std::log(mu_vu[c]) - lse_max);
    }
  }
  return lse_max + std::log(sum);
}

// Non-edge pair term log sum_rc marg_u[r] exp(-theta_u theta_v omega_rc)
// marg_v[c], evaluated through the class factor table.
double nonedge_log_z(const Scratch& s, const BpState& st, std::int32_t u,
                     std::int32_t v, const double* mu, const double* mv) {
  const std::int32_t k = st.k;
  const double* base = s.erow(st.class_of[u], st.class_of[v], 0);
  double acc = 0.0;
  for (std::int32_t r = 0; r < k; ++r) {
    const double* er = base + static_cast<std::size_t>(r) * k;
    double inner = 0.0;
    for (std::int32_t c = 0; c < k; ++c) inner += er[c] * mv[c];
    acc += mu[r] * inner;
  }
  return std::log(acc);
}

}  // namespace

double pair_factor(std::int64_t a, double theta_u, double theta_v,
                   double omega) {
  if (a < 0) throw std::invalid_argument("pair_factor: negative count");
  if (!(theta_u >= 0.0) || !(theta_v >= 0.0) || !(omega >= 0.0))
    throw std::invalid_argument("pair_factor: negative or non-finite inputs");
  return std::exp(log_poisson_weight(a, theta_u * theta_v * omega));
}

BpState init_bp(const Graph& graph, const DcParams& params,
                const BpConfig& cfg) {
  check_config(cfg);
  if (params.k < 1) throw std::invalid_argument("init_bp: k < 1");
  if (graph.n < 1) throw std::invalid_argument("init_bp: empty graph");
  if (params.gamma.size() != static_cast<std::size_t>(params.k) ||
      params.omega.size() != static_cast<std::size_t>(params.k) * params.k ||
      params.theta.size() != static_cast<std::size_t>(graph.n))
    throw std::invalid_argument("init_bp: parameter sizes");

  BpState st;
  st.n = graph.n;
  st.k = params.k;
  st.dense = graph.n <= cfg.dense_threshold;

  // propensity classes: exact-value grouping, deterministic order
  std::vector<std::int32_t> nodes(graph.n);
  for (std::int32_t u = 0; u < graph.n; ++u) nodes[u] = u;
  std::sort(nodes.begin(), nodes.end(), [&](std::int32_t a, std::int32_t b) {
    if (params.theta[a] != params.theta[b])
      return params.theta[a] < params.theta[b];
    return a < b;
  });
  st.class_of.resize(graph.n);
  st.class_nodes = nodes;
  st.class_offset.push_back(0);
  for (std::int32_t i = 0; i < graph.n; ++i) {
    const std::int32_t u = nodes[i];
    if (st.class_theta.empty() || params.theta[u] != st.class_theta.back()) {
      if (!st.class_theta.empty()) st.class_offset.push_back(i);
      st.class_theta.push_back(params.theta[u]);
    }
    st.class_of[u] = static_cast<std::int32_t>(st.class_theta.size()) - 1;
  }
  st.class_offset.push_back(graph.n);

  if (!st.dense) {
    st.slot_of_edge.assign(graph.edges.size(), -1);
    for (std::int32_t u = 0; u < graph.n; ++u)
      for (std::int64_t e = graph.adj_offset[u]; e < graph.adj_offset[u + 1];
           ++e)
        if (graph.adj_node[e] > u) st.slot_of_edge[graph.adj_edge[e]] = e;
  }

  std::mt19937_64 rng(splitmix64(cfg.seed));
  const auto fill_row = [&](double* row) {
    double sum = 0.0;
    for (std::int32_t r = 0; r < st.k; ++r) {
      row[r] = 1.0 + cfg.init_jitter * (2.0 * uniform01(rng) - 1.0);
      sum += row[r];
    }
    for (std::int32_t r = 0; r < st.k; ++r) row[r] /= sum;
  };
  if (st.dense) {
    st.messages.assign(static_cast<std::size_t>(graph.n) * graph.n * st.k, 0.0);
    for (std::int32_t u = 0; u < graph.n; ++u)
      for (std::int32_t v = 0; v < graph.n; ++v)
        if (v != u)
          fill_row(st.message(static_cast<std::int64_t>(u) * graph.n + v));
  } else {
    st.messages.assign(graph.adj_node.size() * st.k, 0.0);
    for (std::size_t slot = 0; slot < graph.adj_node.size(); ++slot)
      fill_row(st.messages.data() + slot * st.k);
  }
  st.marginals.resize(static_cast<std::size_t>(graph.n) * st.k);
  for (std::int32_t u = 0; u < graph.n; ++u) fill_row(st.marginal(u));

  st.order.resize(graph.n);
  for (std::int32_t u = 0; u < graph.n; ++u) st.order[u] = u;
  for (std::int32_t i = graph.n - 1; i > 0; --i) {
    const std::int32_t j = static_cast<std::int32_t>(rng() % (i + 1));
    std::swap(st.order[i], st.order[j]);
  }
  return st;
}

double bp_sweep(const Graph& graph, const DcParams& params, BpState& state,
                const BpConfig& cfg) {
  check_state(graph, params, state);
  check_config(cfg);
  Scratch s;
  return sweep_impl(graph, params, state, cfg, s);
}

void run_bp(const Graph& graph, const DcParams& params, BpState& state,
            const BpConfig& cfg) {
  check_state(graph, params, state);
  check_config(cfg);
  Scratch s;
  state.converged = false;
  state.sweeps = 0;
  for (std::int32_t i = 1; i <= cfg.max_sweeps; ++i) {
    const double change = sweep_impl(graph, params, state, cfg, s);
    state.sweeps = i;
    state.last_change = change;
    if (change < cfg.tol) {
      state.converged = true;
      break;
    }
  }
}

std::vector<double> pair_beliefs(const Graph& graph, const DcParams& params,
                                 const BpState& state) {
  check_state(graph, params, state);
  const std::int32_t k = state.k;
  std::vector<double> out(graph.edges.size() * static_cast<std::size_t>(k) * k);
  std::vector<double> lw(static_cast<std::size_t>(k) * k);
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    const double tt = params.theta[e.u] * params.theta[e.v];
    const double* mu_uv;
    const double* mu_vu;
    if (state.dense) {
      mu_uv = state.message(static_cast<std::int64_t>(e.u) * graph.n + e.v);
      mu_vu = state.message(static_cast<std::int64_t>(e.v) * graph.n + e.u);
    } else {
      const std::int64_t slot = state.slot_of_edge[i];
      mu_uv = state.message(slot);
      mu_vu = state.message(graph.adj_reverse[slot]);
    }
    double* b = out.data() + i * k * k;
    double tot = 0.0;
    for (std::int32_t r = 0; r < k; ++r)
      for (std::int32_t c = 0; c < k; ++c) {
        const double w =
            mu_uv[r] *
            std::exp(log_poisson_weight(e.mult, tt * params.omega[r * k + c])) *
            mu_vu[c];
        b[r * k + c] = w;
        tot += w;
      }
    if (tot > kTinyMix) {
      for (std::int32_t rc = 0; rc < k * k; ++rc) b[rc] /= tot;
    } else {
      for (std::int32_t r = 0; r < k; ++r)
        for (std::int32_t c = 0; c < k; ++c)
          lw[r * k + c] =
              (mu_uv[r] > 0.0 && mu_vu[c] > 0.0)
                  ? log_poisson_weight(e.mult, tt * params.omega[r * k + c]) +
                        std::log(mu_uv[r]) + std::log(mu_vu[c])
                  : kNegInf;
      softmax_row(lw.data(), b, k * k);
    }
  }
  return out;
}

EmStats em_update(const Graph& graph, const DcParams& params,
                  const BpState& state) {
  check_state(graph, params, state);
  const std::int32_t k = state.k;
  EmStats st;
  st.n_bar.assign(k, 0.0);
  st.kappa_bar.assign(k, 0.0);
  st.m_bar.assign(static_cast<std::size_t>(k) * k, 0.0);
  for (std::int32_t u = 0; u < graph.n; ++u) {
    const double* mu = state.marginal(u);
    const double d = static_cast<double>(graph.degrees[u]);
    for (std::int32_t r = 0; r < k; ++r) {
      st.n_bar[r] += mu[r];
      st.kappa_bar[r] += d * mu[r];
    }
  }
  const std::vector<double> beliefs = pair_beliefs(graph, params, state);
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const double a = static_cast<double>(graph.edges[i].mult);
    const double* b = beliefs.data() + i * k * k;
    for (std::int32_t r = 0; r < k; ++r)
      for (std::int32_t c = 0; c < k; ++c)
        st.m_bar[r * k + c] += a * (b[r * k + c] + b[c * k + r]);
  }
  st.gamma.resize(k);
  for (std::int32_t r = 0; r < k; ++r) st.gamma[r] = st.n_bar[r] / graph.n;
  st.omega.assign(static_cast<std::size_t>(k) * k, 0.0);
  for (std::int32_t r = 0; r < k; ++r)
    for (std::int32_t c = 0; c < k; ++c) {
      const double denom = st.n_bar[r] * st.n_bar[c];
      if (denom > 0.0) st.omega[r * k + c] = st.m_bar[r * k + c] / denom;
    }
  return st;
}

double bethe_free_energy(const Graph& graph, const DcParams& params,
                         const BpState& state) {
  check_state(graph, params, state);
  if (!state.dense)
    return detail::bethe_free_energy_sparse(graph, params, state,
                                            graph.n <= kExactNonedgeLimit);
  const std::int32_t k = state.k;
  Scratch s;
  prepare_scratch(graph, params, state, s);
  KahanSum nodes;
  for (std::int32_t u = 0; u < graph.n; ++u) {
    node_field_dense(graph, params, state, s, u);
    nodes.add(logsumexp_row(s.field.data(), k));
  }
  KahanSum pairs;
  for (std::int32_t u = 0; u < graph.n; ++u)
    for (std::int32_t v = u + 1; v < graph.n; ++v)
      pairs.add(edge_log_z(
          params, s, state, u, v,
          s.dense_mult[static_cast<std::size_t>(u) * graph.n + v],
          state.message(static_cast<std::int64_t>(u) * graph.n + v),
          state.message(static_cast<std::int64_t>(v) * graph.n + u)));
  return nodes.sum - pairs.sum;
}

double detail::bethe_free_energy_sparse(const Graph& graph,
                                        const DcParams& params,
                                        const BpState& state,
                                        bool exact_nonedge) {
  check_state(graph, params, state);
  if (state.dense)
    throw std::invalid_argument("bethe_free_energy_sparse: dense state");
  const std::int32_t k = state.k;
  Scratch s;
  prepare_scratch(graph, params, state, s);
  KahanSum nodes;
  for (std::int32_t u = 0; u < graph.n; ++u) {
    node_field_sparse(graph, params, state, s, u);
    nodes.add(logsumexp_row(s.field.data(), k));
  }
  KahanSum edges;
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    const std::int64_t slot = state.slot_of_edge[i];
    edges.add(edge_log_z(params, s, state, e.u, e.v, e.mult,
                         state.message(slot),
                         state.message(graph.adj_reverse[slot])));
  }
  KahanSum nonedge;
  if (exact_nonedge) {
    // exact: all pairs minus the pairs that are edges
    for (std::int32_t u = 0; u < graph.n; ++u) {
      const double* mu = s.snapshot.data() + static_cast<std::size_t>(u) * k;
      for (std::int32_t v = u + 1; v < graph.n; ++v)
        nonedge.add(-nonedge_log_z(
            s, state, u, v, mu,
            s.snapshot.data() + static_cast<std::size_t>(v) * k));
    }
    for (const Edge& e : graph.edges)
      nonedge.add(nonedge_log_z(
          s, state, e.u, e.v,
          s.snapshot.data() + static_cast<std::size_t>(e.u) * k,
          s.snapshot.data() + static_cast<std::size_t>(e.v) * k));
  } else {
    // first-order closure: log z_uv ~ -theta_u theta_v sum_rc omega m m
    std::vector<double> dbar(k, 0.0);
    for (std::int32_t u = 0; u < graph.n; ++u) {
      const double* mu = s.snapshot.data() + static_cast<std::size_t>(u) * k;
      for (std::int32_t r = 0; r < k; ++r) dbar[r] += params.theta[u] * mu[r];
    }
    double quad = 0.0;
    for (std::int32_t r = 0; r < k; ++r)
      for (std::int32_t c = 0; c < k; ++c)
        quad += s.omega[r * k + c] * dbar[r] * dbar[c];
    const auto s_pair = [&](std::int32_t u, std::int32_t v) {
      const double* mu = s.snapshot.data() + static_cast<std::size_t>(u) * k;
      const double* mv = s.snapshot.data() + static_cast<std::size_t>(v) * k;
      double acc = 0.0;
      for (std::int32_t r = 0; r < k; ++r) {
        double inner = 0.0;
        for (std::int32_t c = 0; c < k; ++c)
          inner += s.omega[r * k + c] * mv[c];
        acc += mu[r] * inner;
      }
      return acc;
    };
    KahanSum self_terms;
    for (std::int32_t u = 0; u < graph.n; ++u)
      self_terms.add(params.theta[u] * params.theta[u] * s_pair(u, u));
    KahanSum edge_terms;
    for (const Edge& e : graph.edges)
      edge_terms.add(params.theta[e.u] * params.theta[e.v] * s_pair(e.u, e.v));
    nonedge.add(0.5 * quad - 0.5 * self_terms.sum - edge_terms.sum);
  }
  return nodes.sum - edges.sum + nonedge.sum;
}

namespace {

// Restart initializations cycle through assortative contrast, flat, and
// disassortative contrast at the observed density. The parameters are kept
// exactly block-symmetric: any per-block asymmetry in the start biases the
// dynamics toward one-block collapse, while with symmetric parameters the
// only symmetry breaking available is the message jitter, which the data
// then amplifies along its own structure. A flat start covers graphs whose
// structureless fixed point is the right answer.
DcParams random_init(const Graph& g, ModelKind kind, std::int32_t k,
                     std::int32_t restart, std::mt19937_64& rng) {
  double ratio = 1.0;
  if (restart % 3 == 0) ratio = 0.05 + 0.35 * uniform01(rng);
  if (restart % 3 == 2) ratio = 2.5 + 3.5 * uniform01(rng);
  const double n = static_cast<double>(g.n);
  const double mean_degree =
      g.m > 0 ? 2.0 * static_cast<double>(g.m) / n : 1.0;
  const SbmParams shape = planted_params(g.n, k, mean_degree, ratio);
  DcParams p;
  p.k = k;
  p.gamma = shape.gamma;
  p.omega = shape.omega;
  if (g.m == 0)
    p.omega.assign(static_cast<std::size_t>(k) * k, 0.0);
  else if (kind != ModelKind::plain) {
    // theta = degrees rescales pair means by (2m/n)^2 on average
    const double scale = (n / (2.0 * static_cast<double>(g.m))) *
                         (n / (2.0 * static_cast<double>(g.m)));
    for (double& w : p.omega) w *= scale;
  }
  p.theta.resize(g.n);
  for (std::int32_t u = 0; u < g.n; ++u)
    p.theta[u] = kind == ModelKind::plain
                     ? 1.0
                     : static_cast<double>(g.degrees[u]);
  return p;
}

double rel_change(const DcParams& a, const DcParams& b) {
  double ch = 0.0;
  const auto upd = [&](double x, double y) {
    const double scale = std::max({std::abs(x), std::abs(y), 1e-12});
    ch = std::max(ch, std::abs(x - y) / scale);
  };
  for (std::size_t i = 0; i < a.gamma.size(); ++i) upd(a.gamma[i], b.gamma[i]);
  for (std::size_t i = 0; i < a.omega.size(); ++i) upd(a.omega[i], b.omega[i]);
  return ch;
}

}  // namespace

FitResult fit(const Graph& graph, const FitConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("fit: k < 1");
  if (graph.n < 1) throw std::invalid_argument("fit: empty graph");
  if (cfg.restarts < 1) throw std::invalid_argument("fit: restarts < 1");
  if (cfg.max_em_iters < 1) throw std::invalid_argument("fit: max_em_iters < 1");
  if (!(cfg.em_tol > 0.0)) throw std::invalid_argument("fit: em_tol");
  check_config(cfg.bp);
  if (cfg.warm) {
    const DcParams& w = *cfg.warm;
    if (w.k != cfg.k || w.gamma.size() != static_cast<std::size_t>(cfg.k) ||
        w.omega.size() != static_cast<std::size_t>(cfg.k) * cfg.k ||
        w.theta.size() != static_cast<std::size_t>(graph.n))
      throw std::invalid_argument("fit: warm start shape mismatch");
  }

  struct Candidate {
    bool got = false;
    double free_energy = kNegInf;
    DcParams params;
    BpState state;
    bool converged = false;
    bool resurrected = false;
    bool monotonicity_violated = false;
  } best;

  for (std::int32_t restart = 0; restart < cfg.restarts; ++restart) {
    const std::uint64_t restart_seed = derive_seed(cfg.seed, restart);
    std::mt19937_64 rng(splitmix64(restart_seed));
    DcParams params = (restart == 0 && cfg.warm)
                          ? *cfg.warm
                          : random_init(graph, cfg.kind, cfg.k, restart, rng);
    BpConfig bpc = cfg.bp;
    bpc.seed = derive_seed(restart_seed, 1);
    BpState state = init_bp(graph, params, bpc);
    bool resurrected = false;
    bool mono = false;
    double prev_f = kNegInf;
    for (std::int32_t iter = 0; iter < cfg.max_em_iters; ++iter) {
      run_bp(graph, params, state, bpc);
      EmStats stats = em_update(graph, params, state);
      std::vector<std::int32_t> dead;
      for (std::int32_t r = 0; r < cfg.k; ++r)
        if (stats.n_bar[r] < kDeadBlockMass) dead.push_back(r);
      if (!dead.empty()) {
        resurrected = true;
        for (const std::int32_t r : dead) {
          const std::int32_t w = static_cast<std::int32_t>(rng() % graph.n);
          double* mu = state.marginal(w);
          for (std::int32_t c = 0; c < cfg.k; ++c) mu[c] = (c == r) ? 1.0 : 0.0;
        }
        stats = em_update(graph, params, state);
      }
      DcParams next = params;
      next.gamma = stats.gamma;
      if (cfg.kind == ModelKind::plain) {
        next.omega = stats.omega;
      } else {
        for (std::int32_t r = 0; r < cfg.k; ++r)
          for (std::int32_t c = 0; c < cfg.k; ++c) {
            const double denom = stats.kappa_bar[r] * stats.kappa_bar[c];
            next.omega[r * cfg.k + c] =
                denom > 0.0 ? stats.m_bar[r * cfg.k + c] / denom : 0.0;
          }
      }
      if (!dead.empty()) {
        // reseeded blocks restart from a fresh random row of the right scale
        const double n = static_cast<double>(graph.n);
        const double base =
            cfg.kind == ModelKind::plain
                ? 2.0 * static_cast<double>(graph.m) / (n * n)
                : (graph.m > 0 ? 0.5 / static_cast<double>(graph.m) : 0.0);
        for (const std::int32_t r : dead) {
          next.gamma[r] = std::max(next.gamma[r], 1.0 / n);
          for (std::int32_t c = 0; c < cfg.k; ++c) {
            const double w = base * (1.0 + 0.5 * (2.0 * uniform01(rng) - 1.0));
            next.omega[r * cfg.k + c] = w;
            next.omega[c * cfg.k + r] = w;
          }
        }
        double gsum = 0.0;
        for (const double gv : next.gamma) gsum += gv;
        for (double& gv : next.gamma) gv /= gsum;
      }
      const double change = rel_change(params, next);
      params = std::move(next);
      const double f = bethe_free_energy(graph, params, state);
      if (f < prev_f - 1e-6 * std::max(1.0, std::abs(prev_f))) mono = true;
      prev_f = f;
      if (change < cfg.em_tol) break;
    }
    run_bp(graph, params, state, bpc);
    const double f = bethe_free_energy(graph, params, state);
    if (!best.got || f > best.free_energy) {
      best.got = true;
      best.free_energy = f;
      best.params = std::move(params);
      best.state = std::move(state);
      best.converged = best.state.converged;
      best.resurrected = resurrected;
      best.monotonicity_violated = mono;
    }
  }

  const EmStats stats = em_update(graph, best.params, best.state);
  FitResult out;
  out.kind = cfg.kind;
  out.k = cfg.k;
  out.gamma = stats.gamma;
  out.omega = stats.omega;
  out.marginals = best.state.marginals;
  out.ground_state.resize(graph.n);
  for (std::int32_t u = 0; u < graph.n; ++u) {
    const double* mu = best.state.marginal(u);
    std::int32_t arg = 0;
    for (std::int32_t r = 1; r < cfg.k; ++r)
      if (mu[r] > mu[arg]) arg = r;
    out.ground_state[u] = arg;
  }
  if (cfg.kind == ModelKind::degree_corrected) {
    out.theta.resize(graph.n);
    for (std::int32_t u = 0; u < graph.n; ++u) {
      const std::int32_t r = out.ground_state[u];
      out.theta[u] = stats.kappa_bar[r] > 0.0
                         ? static_cast<double>(graph.degrees[u]) *
                               stats.n_bar[r] / stats.kappa_bar[r]
                         : 1.0;
    }
  }
  out.log_evidence = best.free_energy;
  out.restarts_used = cfg.restarts;
  out.converged = best.converged;
  out.resurrected = best.resurrected;
  out.monotonicity_violated = best.monotonicity_violated;
  out.internal = best.params;
  return out;
}

}  // namespace sbmsel
