#include "svhmc/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svhmc::fit {

double quantile(std::vector<double>& values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(hi), values.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

std::vector<std::string> parameter_names(const model::ModelSpec& spec) {
  std::vector<std::string> names{"mu", "phi", "sigma"};
  if (spec.has_nu()) names.emplace_back("nu");
  return names;
}

const ParameterSummary& FitResult::parameter(std::string_view name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

namespace {

// Constrained latent path for a flat unconstrained draw, written into h.
void latent_path(const model::ModelSpec& spec, std::span<const double> z, std::span<double> h) {
  const std::size_t k = spec.num_scalars();
  const double mu = z[0];
  const double phi = std::tanh(z[1]);
  const double sigma = std::exp(z[2]);
  double d = sigma / std::sqrt(1.0 - phi * phi) * z[k];
  h[0] = mu + d;
  for (std::size_t t = 1; t < h.size(); ++t) {
    d = phi * d + sigma * z[k + t];
    h[t] = mu + d;
  }
}

double constrained_scalar(const model::ModelSpec& spec, std::size_t j, double z) {
  switch (j) {
    case 0: return z;
    case 1: return std::tanh(z);
    case 2: return std::exp(z);
    default: return model::nu_to_constrained(spec.family, z);
  }
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

modsel::LogLikMatrix loglik_matrix(const model::ModelSpec& spec, std::span<const double> y,
                                   const hmc::DrawStore& draws) {
  const std::size_t n = y.size();
  modsel::LogLikMatrix out(draws.total_draws(), n);
  std::vector<double> h(n);
  std::size_t s = 0;
  for (const auto& chain : draws.chains) {
    for (std::size_t r = 0; r < chain.num_draws(); ++r, ++s) {
      const auto z = chain.draw(r);
      latent_path(spec, z, h);
      const double nu = spec.has_nu() ? model::nu_to_constrained(spec.family, z[3]) : 0.0;
      const dist::ErrorDensity density(dist::ErrorFamily{spec.family, nu});
      for (std::size_t t = 0; t < n; ++t)
        out(s, t) = density.log_density(y[t] * std::exp(-0.5 * h[t])) - 0.5 * h[t];
    }
  }
  return out;
}

FitResult fit_sv(const model::Posterior& posterior, const hmc::SamplerConfig& sampler,
                 const FitOptions& options) {
  const auto& spec = posterior.spec();
  const auto y = posterior.data();
  const std::size_t n = y.size();
  const std::size_t k = spec.num_scalars();

  hmc::DrawStore store = hmc::run(posterior, sampler);

  FitResult out;
  out.spec = spec;
  out.sampler = sampler;
  out.divergences = store.divergences();
  out.total_draws = store.total_draws();
  out.mean_accept = store.mean_accept_stat();
  for (const auto& c : store.chains) out.step_sizes.push_back(c.step);

  const std::size_t total = store.total_draws();
  const auto names = parameter_names(spec);
  out.scalar_draws.assign(k, {});
  for (std::size_t j = 0; j < k; ++j) {
    hmc::Chains per_chain = store.coordinate(j);
    for (auto& chain : per_chain)
      for (double& v : chain) v = constrained_scalar(spec, j, v);
    auto& pooled = out.scalar_draws[j];
    pooled.reserve(total);
    for (const auto& chain : per_chain) pooled.insert(pooled.end(), chain.begin(), chain.end());

    ParameterSummary row;
    row.name = names[j];
    row.mean = mean_of(pooled);
    row.sd = sd_of(pooled);
    std::vector<double> scratch = pooled;
    row.lower = quantile(scratch, 0.025);
    row.upper = quantile(scratch, 0.975);
    row.rhat = hmc::split_rhat(per_chain);
    row.ess = hmc::ess_bulk(per_chain);
    out.parameters.push_back(std::move(row));
  }

  // Latent paths, column-major by time so each t's draws are contiguous.
  std::vector<double> paths(total * n);
  {
    std::vector<double> h(n);
    std::size_t s = 0;
    for (const auto& chain : store.chains)
      for (std::size_t r = 0; r < chain.num_draws(); ++r, ++s) {
        latent_path(spec, chain.draw(r), h);
        for (std::size_t t = 0; t < n; ++t) paths[t * total + s] = h[t];
      }
  }

  ParamState& pm = out.posterior_mean;
  pm.mu = out.parameters[0].mean;
  pm.phi = out.parameters[1].mean;
  pm.sigma = out.parameters[2].mean;
  pm.nu = spec.has_nu() ? out.parameters[3].mean : 0.0;
  pm.h.resize(n);
  for (std::size_t t = 0; t < n; ++t) pm.h[t] = mean_of({paths.data() + t * total, total});

  if (options.volatility) {
    auto& vol = out.volatility;
    vol.level = options.band_level;
    const double tail = 0.5 * (1.0 - options.band_level);
    vol.mean.resize(n);
    vol.lower.resize(n);
    vol.upper.resize(n);
    std::vector<double> column(total);
    for (std::size_t t = 0; t < n; ++t) {
      const double* src = paths.data() + t * total;
      double acc = 0.0;
      for (std::size_t s = 0; s < total; ++s) acc += std::exp(0.5 * src[s]);
      vol.mean[t] = acc / static_cast<double>(total);
      column.assign(src, src + total);
      // exp(h/2) is monotone, so quantiles of h map straight through.
      vol.lower[t] = std::exp(0.5 * quantile(column, tail));
      vol.upper[t] = std::exp(0.5 * quantile(column, 1.0 - tail));
    }
  }

  if (options.criteria) {
    const double nu = pm.nu;
    const auto mean_ll = model::pointwise_loglik(spec, pm, y);
    const double ll_at_mean = std::accumulate(mean_ll.begin(), mean_ll.end(), 0.0);
    modsel::LogLikMatrix L(total, n);
    std::size_t s = 0;
    for (const auto& chain : store.chains)
      for (std::size_t r = 0; r < chain.num_draws(); ++r, ++s) {
        const auto z = chain.draw(r);
        const double nu_s = spec.has_nu() ? model::nu_to_constrained(spec.family, z[3]) : nu;
        const dist::ErrorDensity density(dist::ErrorFamily{spec.family, nu_s});
        for (std::size_t t = 0; t < n; ++t) {
          const double h = paths[t * total + s];
          L(s, t) = density.log_density(y[t] * std::exp(-0.5 * h)) - 0.5 * h;
        }
      }
    out.criteria = modsel::criteria_report(std::string(dist::family_label(spec.family)), ll_at_mean, L, options.psis);
  }

  if (options.keep_draws) out.draws = std::move(store);
  return out;
}

FitResult fit_sv(const model::ModelSpec& spec, std::span<const double> y,
                 const hmc::SamplerConfig& sampler, const FitOptions& options) {
  const model::Posterior posterior(spec, std::vector<double>(y.begin(), y.end()));
  return fit_sv(posterior, sampler, options);
}

}  // namespace svhmc::fit
