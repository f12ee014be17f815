#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svhmc/diagnostics.hpp"
#include "svhmc/hmc.hpp"
#include "svhmc/modsel.hpp"
#include "svhmc/svmodel.hpp"

namespace svhmc::fit {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
  std::optional<double> rhat;
  std::optional<double> ess;
};

/// Pointwise posterior summary of exp(h_t / 2).
struct VolatilitySummary {
  double level = 0.90;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct FitOptions {
  bool criteria = true;     // pointwise log-lik, DIC/WAIC/LOO
  bool volatility = true;   // volatility band
  bool keep_draws = false;  // retain the raw DrawStore in the result
  double band_level = 0.90;
  modsel::PsisConfig psis;
};

struct FitResult {
  model::ModelSpec spec;
  hmc::SamplerConfig sampler;
  std::vector<ParameterSummary> parameters;  // mu, phi, sigma, (nu)
  ParamState posterior_mean;                 // constrained means incl. the h path
  VolatilitySummary volatility;
  std::size_t divergences = 0;
  std::size_t total_draws = 0;
  double mean_accept = 0.0;
  std::vector<double> step_sizes;  // adapted step per chain
  std::optional<modsel::CriteriaReport> criteria;
  /// Pooled constrained draws of mu, phi, sigma, (nu); chain-major.
  std::vector<std::vector<double>> scalar_draws;
  std::optional<hmc::DrawStore> draws;

  double divergence_rate() const {
    return total_draws == 0 ? 0.0 : static_cast<double>(divergences) / static_cast<double>(total_draws);
  }
  const ParameterSummary& parameter(std::string_view name) const;
};

/// Names of the constrained scalars for a spec: mu, phi, sigma, and nu when present.
std::vector<std::string> parameter_names(const model::ModelSpec& spec);

FitResult fit_sv(const model::Posterior& posterior, const hmc::SamplerConfig& sampler,
                 const FitOptions& options = {});
FitResult fit_sv(const model::ModelSpec& spec, std::span<const double> y,
                 const hmc::SamplerConfig& sampler, const FitOptions& options = {});

/// S x n matrix of log p(y_t | h_t^(s), nu^(s)) for every retained draw.
modsel::LogLikMatrix loglik_matrix(const model::ModelSpec& spec, std::span<const double> y,
                                   const hmc::DrawStore& draws);

/// Linear-interpolation sample quantile (type 7); `values` is reordered.
double quantile(std::vector<double>& values, double p);

}  // namespace svhmc::fit
