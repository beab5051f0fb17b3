#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbmsel/bp.hpp"
#include "sbmsel/graph.hpp"
#include "sbmsel/null_moments.hpp"
#include "sbmsel/params.hpp"
#include "sbmsel/poisson_moments.hpp"
#include "sbmsel/sampler.hpp"
#include "sbmsel/selection.hpp"

using json = nlohmann::ordered_json;
using namespace sbmsel;

namespace {

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path);
  return load_edge_list(in);
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

json omega_rows(const std::vector<double>& omega, std::int32_t k) {
  json rows = json::array();
  for (std::int32_t r = 0; r < k; ++r) {
    json row = json::array();
    for (std::int32_t s = 0; s < k; ++s)
      row.push_back(omega[static_cast<std::size_t>(r) * k + s]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Shared fit flags; every effective value is echoed into the report so a run
// can be replayed from its own output.
struct FitFlags {
  std::int32_t restarts = 5;
  std::int32_t max_em_iters = 50;
  double em_tol = 1e-6;
  std::int32_t bp_sweeps = 200;
  double bp_tol = 1e-8;
  double damping = 0.1;
  std::int32_t dense_threshold = 64;

  void attach(CLI::App* cmd) {
    cmd->add_option("--restarts", restarts, "EM restarts");
    cmd->add_option("--max-em-iters", max_em_iters, "EM iteration cap per restart");
    cmd->add_option("--em-tol", em_tol, "EM parameter-change tolerance");
    cmd->add_option("--bp-sweeps", bp_sweeps, "message sweeps per BP run");
    cmd->add_option("--bp-tol", bp_tol, "BP message-change tolerance");
    cmd->add_option("--damping", damping, "message damping in [0,1)");
    cmd->add_option("--dense-threshold", dense_threshold,
                    "max n for exact pairwise messages");
  }

  FitConfig to_config(std::int32_t k, ModelKind kind, std::uint64_t seed) const {
    FitConfig fc;
    fc.k = k;
    fc.kind = kind;
    fc.restarts = restarts;
    fc.max_em_iters = max_em_iters;
    fc.em_tol = em_tol;
    fc.bp.max_sweeps = bp_sweeps;
    fc.bp.tol = bp_tol;
    fc.bp.damping = damping;
    fc.bp.dense_threshold = dense_threshold;
    fc.seed = seed;
    return fc;
  }

  json echo() const {
    return {{"restarts", restarts},
            {"max_em_iters", max_em_iters},
            {"em_tol", em_tol},
            {"bp_sweeps", bp_sweeps},
            {"bp_tol", bp_tol},
            {"damping", damping},
            {"dense_threshold", dense_threshold}};
  }
};

json fit_summary(const Graph& g, const FitResult& r, bool marginals) {
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(r.k), 0);
  for (const std::int32_t b : r.ground_state) ++sizes[b];
  json j{{"model", r.kind == ModelKind::plain ? "plain" : "dc"},
         {"k", r.k},
         {"log_evidence", r.log_evidence},
         {"converged", r.converged},
         {"restarts_used", r.restarts_used},
         {"block_sizes", sizes},
         {"gamma", r.gamma},
         {"omega", omega_rows(r.omega, r.k)}};
  if (!r.theta.empty()) j["theta"] = r.theta;
  j["nodes"] = g.node_names;
  j["labels"] = r.ground_state;
  if (marginals) j["marginals"] = r.marginals;
  return j;
}

void emit(const json& report, const std::string& out_path) {
  const std::string body = report.dump(2) + "\n";
  std::cout << body;
  if (!out_path.empty()) write_text(out_path, body);
}

StatisticKind parse_statistic(const std::string& s) {
  if (s == "ground") return StatisticKind::ground_state;
  if (s == "free-energy") return StatisticKind::free_energy;
  throw CLI::ValidationError("--statistic must be ground or free-energy");
}

int cmd_generate(std::int32_t n, std::int32_t k, double mean_degree,
                 double ratio, const std::string& model,
                 const std::string& params_path, const ThetaRule& rule,
                 std::uint64_t seed, const std::string& out,
                 std::string labels_path) {
  SbmParams params;
  if (!params_path.empty()) {
    std::ifstream in(params_path);
    if (!in) throw std::runtime_error("cannot open params file: " + params_path);
    json doc = json::parse(in);
    n = doc.at("n").get<std::int32_t>();
    params.k = doc.at("k").get<std::int32_t>();
    params.gamma = doc.at("gamma").get<std::vector<double>>();
    for (const auto& row : doc.at("omega"))
      for (const auto& x : row) params.omega.push_back(x.get<double>());
  } else {
    params = planted_params(n, k, mean_degree, ratio);
  }
  if (n <= 0) throw std::runtime_error("generate: n must be positive");
  validate(params);

  const bool dc = model == "dc";
  const SampledGraph sg = dc ? sample_dcsbm(n, params, rule, seed)
                             : sample_sbm(n, params, seed);

  std::ostringstream edges;
  write_edge_list(sg.graph, edges);
  write_text(out, edges.str());

  if (labels_path.empty()) labels_path = out + ".labels";
  std::ostringstream labels;
  for (std::int32_t u = 0; u < sg.graph.n; ++u)
    labels << sg.graph.node_names[u] << ' ' << sg.labels[u] << '\n';
  write_text(labels_path, labels.str());

  json config{{"n", n},
              {"k", params.k},
              {"model", dc ? "dc" : "plain"},
              {"gamma", params.gamma},
              {"omega", omega_rows(params.omega, params.k)}};
  if (dc) {
    const char* kind = rule.kind == ThetaRule::Kind::constant ? "constant"
                       : rule.kind == ThetaRule::Kind::two_point ? "two-point"
                                                                 : "power-law";
    config["theta_rule"] = {{"kind", kind},
                            {"value_a", rule.value_a},
                            {"value_b", rule.value_b},
                            {"frac_a", rule.frac_a},
                            {"exponent", rule.exponent},
                            {"floor", rule.floor}};
  }
  json report{{"command", "generate"},
              {"seed", seed},
              {"config", std::move(config)},
              {"outputs", {{"edges", out}, {"labels", labels_path}}},
              {"graph", {{"n", sg.graph.n}, {"m", sg.graph.m}}}};
  if (dc) report["theta"] = sg.theta;
  emit(report, "");
  return 0;
}

int cmd_fit(const std::string& graph_path, std::int32_t k,
            const std::string& model, const FitFlags& flags, bool marginals,
            std::uint64_t seed, const std::string& out) {
  const Graph g = load_graph(graph_path);
  const ModelKind kind =
      model == "dc" ? ModelKind::degree_corrected : ModelKind::plain;
  std::cerr << "fitting " << model << " model, k=" << k << ", n=" << g.n
            << ", m=" << g.m << "\n";
  const FitResult r = fit(g, flags.to_config(k, kind, seed));

  json report{{"command", "fit"},
              {"seed", seed},
              {"config",
               {{"graph", graph_path},
                {"k", k},
                {"model", model},
                {"fit", flags.echo()}}},
              {"fit", fit_summary(g, r, marginals)}};
  emit(report, out);
  return 0;
}

int cmd_test(const std::string& graph_path, std::int32_t k,
             const std::string& statistic, const std::string& moments_from,
             const std::string& variance, std::int32_t bootstrap,
             std::int32_t jobs, const FitFlags& flags, std::uint64_t seed,
             const std::string& samples_path, const std::string& out) {
  const Graph g = load_graph(graph_path);
  TestConfig cfg;
  cfg.k = k;
  cfg.statistic = parse_statistic(statistic);
  if (moments_from != "h0" && moments_from != "h1")
    throw CLI::ValidationError("--moments-from must be h0 or h1");
  cfg.moments_from =
      moments_from == "h0" ? MomentSource::h0 : MomentSource::h1;
  if (variance != "limiting" && variance != "finite-n")
    throw CLI::ValidationError("--variance must be limiting or finite-n");
  cfg.variance = variance == "limiting" ? VarianceMode::limiting
                                        : VarianceMode::finite_n;
  cfg.bootstrap = bootstrap;
  cfg.jobs = jobs;
  cfg.fit = flags.to_config(k, ModelKind::plain, seed);
  cfg.seed = seed;

  std::cerr << "testing degree correction, k=" << k << ", n=" << g.n
            << ", m=" << g.m;
  if (bootstrap > 0) std::cerr << ", bootstrap B=" << bootstrap;
  std::cerr << "\n";
  const TestReport rep = run_test(g, cfg);

  json report{
      {"command", "test"},
      {"seed", seed},
      {"config",
       {{"graph", graph_path},
        {"k", k},
        {"statistic", statistic},
        {"moments_from", moments_from},
        {"variance", variance},
        {"bootstrap", bootstrap},
        {"jobs", jobs},
        {"fit", flags.echo()}}},
      {"lambda", rep.lambda},
      {"lambda_ground_state", rep.lambda_ground_state},
      {"lambda_free_energy", rep.lambda_free_energy},
      {"null_moments",
       {{"mean", rep.null_moments.mean},
        {"variance", rep.null_moments.variance},
        {"small_block", rep.small_block}}},
      {"z_score", rep.z_score},
      {"p_gaussian", rep.p_gaussian},
      {"chi2_dof", rep.chi2_dof},
      {"p_chi2", rep.p_chi2},
      {"fits_converged", rep.fits_converged},
      {"ground_state_agreement", rep.ground_state_agreement},
      {"fit_h0", fit_summary(g, rep.fit_h0, false)},
      {"fit_h1", fit_summary(g, rep.fit_h1, false)}};
  if (rep.bootstrap) {
    report["bootstrap"] = {{"requested", rep.bootstrap->requested},
                           {"dropped", rep.bootstrap->dropped},
                           {"excessive_drops", rep.bootstrap->excessive_drops},
                           {"p_empirical", rep.bootstrap->p_empirical}};
    if (!samples_path.empty()) {
      std::ostringstream csv;
      csv << "lambda\n";
      csv.precision(17);
      for (const double lam : rep.bootstrap->lambdas) csv << lam << '\n';
      write_text(samples_path, csv.str());
      report["bootstrap"]["samples"] = samples_path;
    }
  }
  emit(report, out);
  return 0;
}

int cmd_curves(double mu_min, double mu_max, double mu_step, std::int32_t k,
               double alpha, double confidence, const std::string& moments_out,
               const std::string& failure_out) {
  if (mu_step <= 0.0) throw std::runtime_error("curves: --mu-step must be positive");
  if (mu_min <= 0.0) throw std::runtime_error("curves: --mu-min must be positive");
  std::vector<double> grid;
  for (double mu = mu_min; mu <= mu_max + 1e-12; mu += mu_step)
    grid.push_back(mu);
  if (grid.empty()) throw std::runtime_error("curves: empty mean-degree grid");

  std::ostringstream moments;
  moments.precision(15);
  moments << "mu,f,v,phi,c\n";
  for (const double mu : grid) {
    const DlogDMoments m = dlogd_moments(mu);
    moments << mu << ',' << m.f << ',' << m.v << ',' << m.phi << ',' << m.c
            << '\n';
  }
  write_text(moments_out, moments.str());

  std::ostringstream failure;
  failure.precision(15);
  failure << "mu,n\n";
  for (const double mu : grid) {
    const std::optional<std::int64_t> n = chi2_failure_n(mu, alpha, confidence, k);
    failure << mu << ',';
    if (n) failure << *n;
    failure << '\n';
  }
  write_text(failure_out, failure.str());

  json report{{"command", "curves"},
              {"config",
               {{"mu_min", mu_min},
                {"mu_max", mu_max},
                {"mu_step", mu_step},
                {"k", k},
                {"alpha", alpha},
                {"confidence", confidence}}},
              {"outputs", {{"moments", moments_out}, {"failure", failure_out}}},
              {"rows", static_cast<std::int64_t>(grid.size())}};
  emit(report, "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block model selection for sparse graphs"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "sample a block model graph");
  std::int32_t gen_n = 0, gen_k = 2;
  double gen_mu = 5.0, gen_ratio = 0.15;
  std::string gen_model = "plain", gen_params, gen_out, gen_labels;
  std::string theta_kind = "constant";
  ThetaRule rule;
  std::uint64_t gen_seed = 0;
  gen->add_option("--n", gen_n, "number of nodes");
  gen->add_option("--k", gen_k, "number of blocks");
  gen->add_option("--mean-degree", gen_mu, "target mean degree");
  gen->add_option("--ratio", gen_ratio, "omega_out / omega_in");
  gen->add_option("--model", gen_model, "plain or dc")
      ->check(CLI::IsMember({"plain", "dc"}));
  gen->add_option("--params", gen_params, "JSON parameter document (overrides --n/--k/--mean-degree/--ratio)");
  gen->add_option("--theta-kind", theta_kind, "dc propensity rule")
      ->check(CLI::IsMember({"constant", "two-point", "power-law"}));
  gen->add_option("--theta-a", rule.value_a, "two-point value a");
  gen->add_option("--theta-b", rule.value_b, "two-point value b");
  gen->add_option("--theta-frac", rule.frac_a, "two-point fraction at a");
  gen->add_option("--theta-exponent", rule.exponent, "power-law exponent");
  gen->add_option("--theta-floor", rule.floor, "power-law floor");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--out", gen_out, "edge list path")->required();
  gen->add_option("--labels", gen_labels, "labels path (default <out>.labels)");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit one block model");
  std::string fit_graph, fit_model = "plain", fit_out;
  std::int32_t fit_k = 2;
  bool fit_marginals = false;
  std::uint64_t fit_seed = 0;
  FitFlags fit_flags;
  fitc->add_option("--graph", fit_graph, "edge list path")->required();
  fitc->add_option("--k", fit_k, "number of blocks");
  fitc->add_option("--model", fit_model, "plain or dc")
      ->check(CLI::IsMember({"plain", "dc"}));
  fit_flags.attach(fitc);
  fitc->add_flag("--marginals", fit_marginals, "include per-node marginals");
  fitc->add_option("--seed", fit_seed, "fit seed");
  fitc->add_option("--out", fit_out, "also write the report here");

  // test
  auto* test = app.add_subcommand("test", "test for degree correction");
  std::string test_graph, test_stat = "ground", test_moments = "h0";
  std::string test_variance = "limiting", test_samples, test_out;
  std::int32_t test_k = 2, test_bootstrap = 0, test_jobs = 1;
  std::uint64_t test_seed = 0;
  FitFlags test_flags;
  test->add_option("--graph", test_graph, "edge list path")->required();
  test->add_option("--k", test_k, "number of blocks");
  test->add_option("--statistic", test_stat, "ground or free-energy")
      ->check(CLI::IsMember({"ground", "free-energy"}));
  test->add_option("--moments-from", test_moments, "h0 or h1")
      ->check(CLI::IsMember({"h0", "h1"}));
  test->add_option("--variance", test_variance, "limiting or finite-n")
      ->check(CLI::IsMember({"limiting", "finite-n"}));
  test->add_option("--bootstrap", test_bootstrap, "parametric bootstrap replicates");
  test->add_option("--jobs", test_jobs, "bootstrap worker threads");
  test_flags.attach(test);
  test->add_option("--bootstrap-samples", test_samples,
                   "CSV path for replicate statistics");
  test->add_option("--seed", test_seed, "master seed");
  test->add_option("--out", test_out, "also write the report here");

  // curves
  auto* curves = app.add_subcommand("curves", "emit moment and failure tables");
  double mu_min = 1.0, mu_max = 10.0, mu_step = 0.5;
  double alpha = 0.05, confidence = 0.95;
  std::int32_t curves_k = 2;
  std::string moments_out, failure_out;
  curves->add_option("--mu-min", mu_min, "grid start");
  curves->add_option("--mu-max", mu_max, "grid end");
  curves->add_option("--mu-step", mu_step, "grid step");
  curves->add_option("--k", curves_k, "blocks for the failure curve");
  curves->add_option("--alpha", alpha, "nominal type I rate");
  curves->add_option("--confidence", confidence, "failure confidence level");
  curves->add_option("--moments-out", moments_out, "moments CSV path")->required();
  curves->add_option("--failure-out", failure_out, "failure CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (theta_kind == "two-point") rule.kind = ThetaRule::Kind::two_point;
      if (theta_kind == "power-law") rule.kind = ThetaRule::Kind::power_law;
      return cmd_generate(gen_n, gen_k, gen_mu, gen_ratio, gen_model,
                          gen_params, rule, gen_seed, gen_out, gen_labels);
    }
    if (fitc->parsed())
      return cmd_fit(fit_graph, fit_k, fit_model, fit_flags, fit_marginals,
                     fit_seed, fit_out);
    if (test->parsed())
      return cmd_test(test_graph, test_k, test_stat, test_moments,
                      test_variance, test_bootstrap, test_jobs, test_flags,
                      test_seed, test_samples, test_out);
    if (curves->parsed())
      return cmd_curves(mu_min, mu_max, mu_step, curves_k, alpha, confidence,
                        moments_out, failure_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
