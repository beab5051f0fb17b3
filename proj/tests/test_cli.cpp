#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

using json = nlohmann::json;

namespace {

struct RunResult {
  int status;
  std::string out;
};

// Runs the CLI with stderr discarded; stdout must carry the whole report.
RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SBMSEL_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int rc = pclose(pipe);
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, out};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared fixture graph, generated on first use so cases run in any order.
const std::string& fixture_graph() {
  static const std::string path = [] {
    const std::string p = "/tmp/sbmsel_cli_fixture.edges";
    const RunResult r = run_cli(
        "generate --n 80 --k 2 --mean-degree 4 --ratio 0.2 --seed 11 --out " + p);
    REQUIRE(r.status == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("generate writes deterministic files and a config echo") {
  const std::string base =
      "generate --n 80 --k 2 --mean-degree 4 --ratio 0.2 --seed 11 --out ";
  const RunResult a = run_cli(base + "/tmp/sbmsel_cli_gen.edges");
  REQUIRE(a.status == 0);
  const std::string edges1 = slurp("/tmp/sbmsel_cli_gen.edges");
  const std::string labels1 = slurp("/tmp/sbmsel_cli_gen.edges.labels");

  const RunResult b = run_cli(base + "/tmp/sbmsel_cli_gen.edges");
  REQUIRE(b.status == 0);
  CHECK(a.out == b.out);
  CHECK(slurp("/tmp/sbmsel_cli_gen.edges") == edges1);
  CHECK(slurp("/tmp/sbmsel_cli_gen.edges.labels") == labels1);

  const json doc = json::parse(a.out);
  CHECK(doc.at("command") == "generate");
  CHECK(doc.at("seed") == 11);
  CHECK(doc.at("config").at("n") == 80);
  CHECK(doc.at("config").at("gamma").size() == 2);
  CHECK(doc.at("graph").at("m").get<int>() > 0);

  // a different seed must change the sample
  const RunResult c = run_cli(
      "generate --n 80 --k 2 --mean-degree 4 --ratio 0.2 --seed 12 --out "
      "/tmp/sbmsel_cli_gen2.edges");
  REQUIRE(c.status == 0);
  CHECK(slurp("/tmp/sbmsel_cli_gen2.edges") != edges1);
}

TEST_CASE("generate rejects an empty graph request") {
  const RunResult r = run_cli("generate --n 0 --out /tmp/sbmsel_cli_zero.edges");
  CHECK(r.status != 0);
}

TEST_CASE("generate supports degree-corrected sampling") {
  const RunResult r = run_cli(
      "generate --n 90 --k 2 --mean-degree 5 --ratio 0.2 --model dc "
      "--theta-kind power-law --theta-exponent 2.5 --seed 4 --out "
      "/tmp/sbmsel_cli_dc.edges");
  REQUIRE(r.status == 0);
  const json doc = json::parse(r.out);
  CHECK(doc.at("config").at("model") == "dc");
  CHECK(doc.at("config").at("theta_rule").at("kind") == "power-law");
  CHECK(doc.at("theta").size() == 90);
}

TEST_CASE("fit emits a parseable report and handles k=1") {
  const RunResult k2 = run_cli(
      "fit --graph " + fixture_graph() + " --k 2 --restarts 2 "
      "--max-em-iters 40 --seed 3");
  REQUIRE(k2.status == 0);
  const json doc = json::parse(k2.out);
  CHECK(doc.at("command") == "fit");
  CHECK(doc.at("config").at("fit").at("restarts") == 2);
  const json& f = doc.at("fit");
  CHECK(f.at("k") == 2);
  CHECK(f.at("log_evidence").get<double>() < 0.0);
  CHECK(f.at("gamma").size() == 2);
  CHECK(f.at("omega").size() == 2);
  CHECK(f.at("labels").size() == f.at("nodes").size());

  const RunResult k1 =
      run_cli("fit --graph " + fixture_graph() + " --k 1 --seed 0");
  REQUIRE(k1.status == 0);
  const json one = json::parse(k1.out);
  CHECK(one.at("fit").at("block_sizes").size() == 1);
  CHECK(std::isfinite(one.at("fit").at("log_evidence").get<double>()));
}

TEST_CASE("fit fails cleanly on a missing graph") {
  const RunResult r = run_cli("fit --graph /tmp/sbmsel_cli_missing.edges --k 2");
  CHECK(r.status != 0);
}

TEST_CASE("test reports the full decision record deterministically") {
  const std::string args =
      "test --graph " + fixture_graph() + " --k 2 --restarts 2 "
      "--max-em-iters 40 --seed 5";
  const RunResult a = run_cli(args);
  const RunResult b = run_cli(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);

  const json doc = json::parse(a.out);
  CHECK(doc.at("command") == "test");
  CHECK(doc.at("config").at("statistic") == "ground");
  CHECK(doc.at("config").at("moments_from") == "h0");
  CHECK(doc.at("lambda").get<double>() >= 0.0);
  CHECK(doc.at("null_moments").at("mean").get<double>() > 0.0);
  CHECK(doc.at("null_moments").at("variance").get<double>() > 0.0);
  const double p_gauss = doc.at("p_gaussian").get<double>();
  const double p_chi2 = doc.at("p_chi2").get<double>();
  CHECK(p_gauss >= 0.0);
  CHECK(p_gauss <= 1.0);
  CHECK(p_chi2 >= 0.0);
  CHECK(p_chi2 <= 1.0);
  CHECK(doc.at("chi2_dof").get<int>() > 0);
  CHECK(doc.at("fit_h0").at("model") == "plain");
  CHECK(doc.at("fit_h1").at("model") == "dc");
  CHECK(!doc.contains("bootstrap"));
}

TEST_CASE("test runs the bootstrap and dumps replicate samples") {
  const RunResult r = run_cli(
      "test --graph " + fixture_graph() + " --k 2 --restarts 2 "
      "--max-em-iters 30 --bp-sweeps 150 --bootstrap 6 --jobs 2 --seed 9 "
      "--bootstrap-samples /tmp/sbmsel_cli_bs.csv");
  REQUIRE(r.status == 0);
  const json doc = json::parse(r.out);
  const json& bs = doc.at("bootstrap");
  CHECK(bs.at("requested") == 6);
  const double p = bs.at("p_empirical").get<double>();
  CHECK(p > 0.0);
  CHECK(p <= 1.0);

  std::istringstream csv(slurp("/tmp/sbmsel_cli_bs.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "lambda");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 6 - bs.at("dropped").get<int>());
}

TEST_CASE("curves writes both tables and rejects a bad grid") {
  const RunResult r = run_cli(
      "curves --mu-min 1 --mu-max 3 --mu-step 1 --moments-out "
      "/tmp/sbmsel_cli_mo.csv --failure-out /tmp/sbmsel_cli_fa.csv");
  REQUIRE(r.status == 0);
  const json doc = json::parse(r.out);
  CHECK(doc.at("rows") == 3);

  std::istringstream mo(slurp("/tmp/sbmsel_cli_mo.csv"));
  std::string line;
  REQUIRE(std::getline(mo, line));
  CHECK(line == "mu,f,v,phi,c");
  int rows = 0;
  while (std::getline(mo, line)) ++rows;
  CHECK(rows == 3);

  std::istringstream fa(slurp("/tmp/sbmsel_cli_fa.csv"));
  REQUIRE(std::getline(fa, line));
  CHECK(line == "mu,n");
  // every requested mean degree gets a finite failure size on this grid
  while (std::getline(fa, line)) {
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    CHECK(std::stoll(line.substr(comma + 1)) > 0);
  }

  const RunResult bad = run_cli(
      "curves --mu-min 5 --mu-max 1 --mu-step 1 --moments-out "
      "/tmp/sbmsel_cli_mo2.csv --failure-out /tmp/sbmsel_cli_fa2.csv");
  CHECK(bad.status != 0);

  const RunResult zero = run_cli(
      "curves --mu-min 1 --mu-max 3 --mu-step 0 --moments-out "
      "/tmp/sbmsel_cli_mo3.csv --failure-out /tmp/sbmsel_cli_fa3.csv");
  CHECK(zero.status != 0);
}
