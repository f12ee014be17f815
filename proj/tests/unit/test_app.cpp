#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "svhmc/app.hpp"

using namespace svhmc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("svhmc_test_app_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing " << p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

app::json read_json(const fs::path& p) { return app::json::parse(slurp(p)); }

hmc::SamplerConfig quick_sampler(std::uint64_t seed = 1) {
  hmc::SamplerConfig c;
  c.warmup = 300;
  c.draws = 300;
  c.chains = 2;
  c.seed = seed;
  return c;
}

// Writes a synthetic return series (columns t, return, h) and returns its path.
std::string synth_file(const std::string& name, std::size_t n, dist::ErrorFamily family = dist::ErrorFamily::gaussian(),
                       std::uint64_t seed = 1) {
  app::SynthCommand s;
  s.n = n;
  s.family = family;
  s.seed = seed;
  s.out = scratch(name).string();
  std::ostringstream log;
  REQUIRE(app::synth(s, log) == app::kOk);
  return s.out;
}

app::DataOptions returns_column(const std::string& path) {
  app::DataOptions d;
  d.path = path;
  d.column = "return";
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SVHMC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("synth writes a manifest comment and three columns") {
  const auto path = synth_file("synth.csv", 50);
  const auto text = slurp(path);
  CHECK(text.rfind("# manifest {", 0) == 0);
  CHECK(text.find("\nt,return,h\n") != std::string::npos);
  const auto series = app::load_series(returns_column(path));
  CHECK(series.values.size() == 50);
  CHECK(series.demeaned);
}

TEST_CASE("describe and returns commands") {
  const auto prices = scratch("prices.csv");
  {
    std::ofstream f(prices);
    f << "date,close\n1,100\n2,101\n3,99.5\n4,100.2\n5,102\n6,101.1\n";
  }
  app::ReturnsCommand rc;
  rc.data.path = prices.string();
  rc.data.kind = io::SeriesKind::Prices;
  rc.out = scratch("returns").string();
  std::ostringstream log;
  REQUIRE(app::returns(rc, log) == app::kOk);
  const auto back = io::ingest((fs::path(rc.out) / "returns.csv").string(), "", io::SeriesKind::Returns);
  REQUIRE(back.values.size() == 5);
  CHECK(back.values[0] == doctest::Approx(100.0 * std::log(1.01)));

  app::DescribeCommand dc;
  dc.data = rc.data;
  dc.out = scratch("describe").string();
  REQUIRE(app::describe(dc, log) == app::kOk);
  const auto j = read_json(fs::path(dc.out) / "describe.json");
  CHECK(j["statistics"]["T"] == 5);
  CHECK(j["manifest"]["command"] == "describe");
  CHECK(j["schema_version"] == app::kSchemaVersion);
  CHECK(slurp(fs::path(dc.out) / "describe.csv").find("Series,T,Mean,SD,Skewness,Kurtosis") != std::string::npos);
}

TEST_CASE("fit report shape, determinism and rerun") {
  const auto data = synth_file("fit_data.csv", 150);
  app::FitCommand fc;
  fc.data = returns_column(data);
  fc.sampler = quick_sampler(7);
  fc.out = scratch("fit_a").string();
  std::ostringstream log;
  REQUIRE(app::fit(fc, log) == app::kOk);
  const auto report = read_json(fs::path(fc.out) / "fit.json");
  CHECK(report["parameters"].size() == 3);
  CHECK(report["manifest"]["data"]["n"] == 150);
  CHECK(report["volatility"]["mean"].size() == 150);
  CHECK(report["criteria"]["pareto_k"].size() == 150);
  CHECK_FALSE(report["divergence_budget"]["breached"].get<bool>());

  auto again = fc;
  again.out = scratch("fit_b").string();
  REQUIRE(app::fit(again, log) == app::kOk);
  for (const char* f : {"fit.json", "parameters.csv", "volatility.csv", "manifest.json"})
    CHECK_MESSAGE(slurp(fs::path(fc.out) / f) == slurp(fs::path(again.out) / f), f);

  const auto rerun_dir = scratch("fit_rerun");
  REQUIRE(app::rerun((fs::path(fc.out) / "manifest.json").string(), rerun_dir.string(), log) == app::kOk);
  for (const char* f : {"fit.json", "parameters.csv", "volatility.csv"})
    CHECK_MESSAGE(slurp(fs::path(fc.out) / f) == slurp(rerun_dir / f), f);

  auto ged = fc;
  ged.family = dist::Family::Ged;
  ged.out = scratch("fit_ged").string();
  REQUIRE(app::fit(ged, log) == app::kOk);
  CHECK(read_json(fs::path(ged.out) / "fit.json")["parameters"].size() == 4);

  app::PlotCommand pc;
  pc.data = returns_column(data);
  pc.report = (fs::path(fc.out) / "fit.json").string();
  pc.out = scratch("plot").string();
  REQUIRE(app::plot(pc, log) == app::kOk);
  const auto svg = slurp(fs::path(pc.out) / "volatility.svg");
  CHECK(svg.find("class=\"band\"") != std::string::npos);
  CHECK(svg.find("<metadata>") != std::string::npos);
  CHECK(fs::exists(fs::path(pc.out) / "returns.svg"));
}

TEST_CASE("rerun refuses changed data") {
  const auto data = synth_file("changing.csv", 40);
  app::DescribeCommand dc;
  dc.data = returns_column(data);
  dc.out = scratch("describe_changed").string();
  std::ostringstream log;
  REQUIRE(app::describe(dc, log) == app::kOk);
  synth_file("changing.csv", 40, dist::ErrorFamily::gaussian(), 2);
  CHECK_THROWS((void)app::rerun((fs::path(dc.out) / "manifest.json").string(), "", log));
}

TEST_CASE("divergence budget breach gives exit status 2 with the report written") {
  const auto data = synth_file("div_data.csv", 100);
  app::FitCommand fc;
  fc.data = returns_column(data);
  fc.sampler = quick_sampler(3);
  fc.sampler.warmup = 0;
  fc.sampler.adapt_step_size = false;
  fc.sampler.mass_matrix = hmc::MassMatrix::Unit;
  fc.sampler.initial_step = 25.0;
  fc.out = scratch("fit_div").string();
  std::ostringstream log;
  CHECK(app::fit(fc, log) == app::kDivergenceBudget);
  const auto report = read_json(fs::path(fc.out) / "fit.json");
  CHECK(report["divergence_budget"]["breached"].get<bool>());

  const std::string args = "fit --data " + data + " --column return --warmup 300 --draws 100 --chains 1 --out " +
                           scratch("cli_fit").string();
  CHECK(run_cli(args) == 0);
  CHECK(run_cli("fit --data /nonexistent.csv --out " + scratch("cli_missing").string()) == 1);
  CHECK(run_cli("--version") == 0);
}

TEST_CASE("compare writes the criteria table") {
  const auto data = synth_file("cmp_data.csv", 150);
  app::CompareCommand cc;
  cc.data = returns_column(data);
  cc.families = {dist::Family::Gaussian, dist::Family::Gaussian};
  cc.sampler = quick_sampler(4);
  cc.out = scratch("compare").string();
  std::ostringstream log;
  REQUIRE(app::compare(cc, log) == app::kOk);
  const auto csv = slurp(fs::path(cc.out) / "compare.csv");
  CHECK(csv.find("\nDist,DIC,WAIC,SE_waic,LOO,SE_loo\n") != std::string::npos);
  const auto j = read_json(fs::path(cc.out) / "compare.json");
  CHECK(j["manifest"]["command"] == "compare");
  // Same family twice with the same seed: identical rows, tie kept in order.
  CHECK(j["ranking"]["waic"][0]["value"] == j["ranking"]["waic"][1]["value"]);
  CHECK(j["ranking"]["waic"][1]["rank"] == 2);

  cc.sigma_prior = "gamma:-1";
  CHECK_THROWS((void)app::compare(cc, log));
  cc.families = {dist::Family::Gaussian};
  CHECK_THROWS((void)app::compare(cc, log));
}

TEST_CASE("sensitivity with one repeat has one row per cell") {
  const auto data = synth_file("sens_data.csv", 120);
  app::SensitivityCommand sc;
  sc.data = returns_column(data);
  sc.families = {dist::Family::Gaussian, dist::Family::Ged};
  sc.sigma_priors = {"gamma:0.1", "invgamma:2.5,0.025"};
  sc.repeats = 1;
  sc.sampler = quick_sampler(5);
  sc.out = scratch("sens").string();
  std::ostringstream log;
  REQUIRE(app::sensitivity(sc, log) == app::kOk);
  std::istringstream csv(slurp(fs::path(sc.out) / "sensitivity.csv"));
  std::string line;
  std::getline(csv, line);  // manifest
  std::getline(csv, line);
  CHECK(line == "Prior,Dist,Repeat,DIC,WAIC,EP_waic,LOO,EP_loo");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4);
  const auto j = read_json(fs::path(sc.out) / "sensitivity.json");
  CHECK(j.contains("all_stable"));
  CHECK(app::sensitivity_presets().size() == 3);
  CHECK(app::sensitivity_sampler().draws * app::sensitivity_sampler().chains == 2500);
}

TEST_CASE("simulate with the oracle sampler writes a zero table") {
  app::SimulateCommand sc;
  sc.grid.phis = {0.95};
  sc.grid.sigmas = {0.15};
  sc.grid.ns = {200};
  sc.grid.replications = 2;
  sc.oracle = true;
  sc.out = scratch("sim").string();
  std::ostringstream log;
  REQUIRE(app::simulate(sc, log) == app::kOk);
  const auto j = read_json(fs::path(sc.out) / "simstudy.json");
  for (const auto& row : j["cells"][0]["rows"]) {
    CHECK(row["bias"].get<double>() == 0.0);
    CHECK(row["smse"].get<double>() == 0.0);
  }
  const auto csv = slurp(fs::path(sc.out) / "simstudy.csv");
  CHECK(csv.find("n,phi,sigma_eta,parameter,bias,smse,min_ess,max_rhat,divergence_rate") != std::string::npos);

  const auto rerun_dir = scratch("sim_rerun");
  REQUIRE(app::rerun((fs::path(sc.out) / "manifest.json").string(), rerun_dir.string(), log) == app::kOk);
  CHECK(slurp(rerun_dir / "simstudy.csv") == csv);
}

TEST_CASE("sampler JSON round trip") {
  auto c = quick_sampler(99);
  c.target_accept = 0.93;
  c.max_tree_depth = 7;
  c.mass_matrix = hmc::MassMatrix::Unit;
  const auto back = app::sampler_from_json(app::to_json(c));
  CHECK(back.seed == 99);
  CHECK(back.target_accept == 0.93);
  CHECK(back.max_tree_depth == 7);
  CHECK(back.mass_matrix == hmc::MassMatrix::Unit);
  CHECK(back.warmup == 300);
}
