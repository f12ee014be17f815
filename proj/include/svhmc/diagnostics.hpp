#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "svhmc/hmc.hpp"

namespace svhmc::hmc {

using Chains = std::vector<std::vector<double>>;

/// Rank-normalized split-R-hat. nullopt when fewer than 2 chains or 4 draws
/// per chain are available, or when every draw is identical.
std::optional<double> split_rhat(const Chains& chains);

/// Bulk effective sample size: ESS of the rank-normalized split chains, with
/// Geyer's initial positive sequence truncated at the first negative paired
/// autocorrelation sum. nullopt under the same conditions as split_rhat.
std::optional<double> ess_bulk(const Chains& chains);

/// ESS of the raw (not rank-normalized) split chains; the right quantity for
/// the Monte Carlo standard error of a posterior mean. Works with a single
/// chain of at least 4 draws.
std::optional<double> ess_mean(const Chains& chains);

/// sd / sqrt(ess_mean) of the pooled draws.
std::optional<double> mcse_mean(const Chains& chains);

struct CoordinateDiagnostics {
  std::size_t index = 0;
  std::optional<double> rhat;
  std::optional<double> ess;
};

struct Diagnostics {
  std::vector<CoordinateDiagnostics> coordinates;
  std::size_t divergences = 0;
  std::size_t total_draws = 0;

  std::optional<double> max_rhat() const;
  std::optional<double> min_ess() const;
};

/// Diagnostics for the given coordinates (all of them when empty).
Diagnostics diagnostics(const DrawStore& store, std::span<const std::size_t> coords = {});

}  // namespace svhmc::hmc
