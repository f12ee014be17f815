#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "svhmc/dist.hpp"
#include "svhmc/hmc.hpp"
#include "svhmc/rng.hpp"
#include "svhmc/svmodel.hpp"

namespace svhmc::sim {

struct SimulatedSeries {
  std::vector<double> y;
  std::vector<double> h;
};

/// Draws h from the stationary AR(1) start and recursion, then
/// y_t = exp(h_t / 2) eps_t. sigma = 0 is allowed and gives h_t = mu.
SimulatedSeries simulate_sv(double mu, double phi, double sigma, const dist::ErrorFamily& family,
                            std::size_t n, Rng& rng);

struct BiasSmse {
  double bias = 0.0;
  double smse = 0.0;  // sqrt(mean squared error)
};

/// Throws std::invalid_argument on an empty estimate vector.
BiasSmse bias_smse(std::span<const double> estimates, double truth);

struct SimGrid {
  double mu = -9.0;
  std::vector<double> phis{0.95, 0.99};
  std::vector<double> sigmas{0.05, 0.15};
  std::vector<std::size_t> ns{500, 1000, 1500};
  std::size_t replications = 20;
  hmc::SamplerConfig sampler = desk_sampler();
  std::uint64_t seed = 1;
  dist::ErrorFamily data_family = dist::ErrorFamily::gaussian();
  /// A replication whose divergence rate exceeds this is flagged.
  double divergence_budget = 0.05;
  /// Replications run concurrently on this many workers (0 = hardware threads).
  std::size_t workers = 0;

  static hmc::SamplerConfig desk_sampler();
  /// m = 20 with 2,000 warmup and 2,000 draws on 4 chains.
  static SimGrid desk();
  /// m = 100 with 5,000 warmup and 5,000 draws.
  static SimGrid full();
  std::size_t num_cells() const { return phis.size() * sigmas.size() * ns.size(); }
  void validate() const;
};

/// Everything an estimator sees for one replication.
struct EstimationTask {
  const model::ModelSpec* spec = nullptr;
  std::span<const double> y;
  const SimulatedSeries* series = nullptr;
  double mu = 0.0, phi = 0.0, sigma = 0.0;  // generating values
  hmc::SamplerConfig sampler;               // seed already set for this replication
};

struct Estimate {
  std::vector<double> means;  // posterior means of mu, phi, sigma (constrained)
  std::size_t divergences = 0;
  std::size_t total_draws = 0;
  std::optional<double> max_rhat;
  std::optional<double> min_ess;
};

using Estimator = std::function<Estimate(const EstimationTask&)>;

/// Posterior means from a full NUTS fit.
Estimate hmc_estimator(const EstimationTask& task);

struct Replication {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Estimate estimate;
  bool over_budget = false;
};

struct ParameterRow {
  std::string parameter;  // mu, phi, sigma
  double truth = 0.0;
  BiasSmse error;
  std::vector<double> estimates;
};

struct CellReport {
  std::size_t n = 0;
  double phi = 0.0;
  double sigma = 0.0;
  std::vector<ParameterRow> rows;
  std::vector<Replication> replications;
  double divergence_rate = 0.0;  // pooled over replications
  std::size_t flagged = 0;       // replications over the divergence budget
  std::optional<double> min_ess;
  std::optional<double> max_rhat;
};

struct SimReport {
  SimGrid grid;
  std::vector<CellReport> cells;

  bool budget_breached() const;
  /// One row per cell x parameter:
  /// n,phi,sigma_eta,parameter,bias,smse,min_ess,max_rhat,divergence_rate
  void write_csv(std::ostream& os) const;
};

/// For each (phi, sigma) pair: whether smse is non-increasing from the
/// smallest to the largest n for at least 2 of the 3 parameters. Reported,
/// not asserted.
struct TrendCheck {
  double phi = 0.0;
  double sigma = 0.0;
  std::size_t improving = 0;  // parameters whose smse did not grow
  bool holds = false;
};
std::vector<TrendCheck> smse_trend(const SimReport& report);

/// Replication seed for cell `cell`, replication `rep`.
std::uint64_t replication_seed(std::uint64_t master, std::size_t cell, std::size_t rep);

/// Runs every cell and replication. Deterministic under grid.seed regardless
/// of the worker count.
SimReport run_study(const SimGrid& grid, const model::ModelSpec& spec,
                    const Estimator& estimator = hmc_estimator);

}  // namespace svhmc::sim
