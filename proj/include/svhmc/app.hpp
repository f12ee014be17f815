#pragma once

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

#include "svhmc/dist.hpp"
#include "svhmc/fit.hpp"
#include "svhmc/hmc.hpp"
#include "svhmc/io.hpp"
#include "svhmc/simstudy.hpp"

namespace svhmc::app {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
std::string_view toolkit_version();

/// Exit codes shared by every command.
enum ExitCode : int {
  kOk = 0,
  kError = 1,
  kDivergenceBudget = 2,  // a fit or replication breached the divergence budget
  kPartialFailure = 3,    // some (not all) fits of compare/sensitivity failed
};

struct DataOptions {
  std::string path;
  std::string column;
  io::SeriesKind kind = io::SeriesKind::Returns;
  bool demean = true;

  /// Same, without demeaning.
  static DataOptions raw() {
    DataOptions d;
    d.demean = false;
    return d;
  }
};

struct DescribeCommand {
  DataOptions data = DataOptions::raw();
  std::string out;
};

/// Ingests a price or return column and writes it back as a return CSV.
struct ReturnsCommand {
  DataOptions data = DataOptions::raw();
  std::string out;
};

struct FitCommand {
  DataOptions data;
  dist::Family family = dist::Family::Gaussian;
  std::string sigma_prior = "gamma:0.1";
  hmc::SamplerConfig sampler;
  double max_divergence_rate = 0.10;
  std::string out;
};

struct CompareCommand {
  DataOptions data;
  std::vector<dist::Family> families{dist::Family::Gaussian, dist::Family::StudentT,
                                     dist::Family::Ged, dist::Family::SkewNormal};
  std::string sigma_prior = "gamma:0.1";
  hmc::SamplerConfig sampler;
  double max_divergence_rate = 0.10;
  std::string out;
};

/// The three sigma_eta^2 prior presets from the sensitivity study.
std::vector<std::string> sensitivity_presets();
hmc::SamplerConfig sensitivity_sampler();

struct SensitivityCommand {
  DataOptions data;
  std::vector<dist::Family> families{dist::Family::Gaussian, dist::Family::StudentT,
                                     dist::Family::Ged, dist::Family::SkewNormal};
  std::vector<std::string> sigma_priors = sensitivity_presets();
  std::size_t repeats = 2;
  hmc::SamplerConfig sampler = sensitivity_sampler();
  double max_divergence_rate = 0.10;
  std::string out;
};

struct SimulateCommand {
  sim::SimGrid grid = sim::SimGrid::desk();
  /// Replace the sampler with one that returns the generating values.
  bool oracle = false;
  std::string out;
};

/// Writes one synthetic SV return series as CSV (columns t, return, h).
struct SynthCommand {
  double mu = -9.0;
  double phi = 0.95;
  double sigma = 0.15;
  dist::ErrorFamily family = dist::ErrorFamily::gaussian();
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::string out;  // file path
};

struct PlotCommand {
  DataOptions data = DataOptions::raw();  // returns trace when data.path is set
  std::string report;  // fit.json for the volatility band
  std::string out;
};

int describe(const DescribeCommand& cmd, std::ostream& log);
int returns(const ReturnsCommand& cmd, std::ostream& log);
int fit(const FitCommand& cmd, std::ostream& log);
int compare(const CompareCommand& cmd, std::ostream& log);
int sensitivity(const SensitivityCommand& cmd, std::ostream& log);
int simulate(const SimulateCommand& cmd, std::ostream& log);
int synth(const SynthCommand& cmd, std::ostream& log);
int plot(const PlotCommand& cmd, std::ostream& log);
/// Rebuilds a command from a manifest.json and runs it, writing into `out`
/// (the manifest's directory when empty).
int rerun(const std::string& manifest_path, const std::string& out, std::ostream& log);

/// Loads and prepares the series a command would model.
io::ReturnSeries load_series(const DataOptions& data);

// JSON views used by the reports and the Python bindings.
json to_json(const dist::PriorConfig& priors);
json to_json(const hmc::SamplerConfig& sampler);
hmc::SamplerConfig sampler_from_json(const json& j);
json to_json(const fit::FitResult& result);
json to_json(const modsel::CriteriaReport& report);
json to_json(const modsel::Ranking& ranking);
json to_json(const sim::SimReport& report);
json to_json(const io::Description& d);

/// Oracle estimator: posterior means equal to the generating values.
sim::Estimate oracle_estimator(const sim::EstimationTask& task);

}  // namespace svhmc::app
