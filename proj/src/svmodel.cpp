#include "svhmc/svmodel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace svhmc::model {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// log(1 - tanh(z)^2) without cancellation.
double log_sech2(double z) {
  const double a = std::abs(z);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

void check_inputs(const ModelSpec& spec, std::size_t z_len, std::span<const double> y) {
  if (y.size() < 2) throw std::invalid_argument("log_posterior: need at least 2 observations");
  if (z_len != spec.dim(y.size()))
    throw std::invalid_argument("log_posterior: dimension mismatch, state has " +
                                std::to_string(z_len) + " coordinates but " +
                                std::to_string(y.size()) + " observations need " +
                                std::to_string(spec.dim(y.size())));
  for (std::size_t t = 0; t < y.size(); ++t)
    if (!std::isfinite(y[t]))
      throw std::invalid_argument("log_posterior: non-finite return at index " + std::to_string(t));
}

// Log posterior and (when grad is non-empty) its gradient. weights may be
// empty, meaning every observation has weight 1.
double evaluate(const ModelSpec& spec, std::span<const double> z, std::span<const double> y,
                std::span<const double> weights, std::span<double> grad) {
  const std::size_t n = y.size();
  const std::size_t k = spec.num_scalars();
  const bool want_grad = !grad.empty();

  const double mu = z[0];
  const double phi = std::tanh(z[1]);
  const double sigma = std::exp(z[2]);
  const double sigma2 = sigma * sigma;
  double nu = 0.0;
  if (spec.has_nu()) {
    nu = nu_to_constrained(spec.family, z[3]);
    if (!dist::in_support(spec.family, nu)) return -kInf;
  }
  if (!(std::abs(phi) < 1.0) || !(sigma > 0.0) || !std::isfinite(sigma)) return -kInf;

  const dist::ErrorDensity density(dist::ErrorFamily{spec.family, nu});
  const auto eta = z.subspan(k);
  const double one_m_phi2 = 1.0 - phi * phi;
  const double sd_first = sigma / std::sqrt(one_m_phi2);

  // d_t = h_t - mu.
  std::vector<double> d(n);
  d[0] = sd_first * eta[0];
  for (std::size_t t = 1; t < n; ++t) d[t] = phi * d[t - 1] + sigma * eta[t];

  std::vector<double> g_h;
  if (want_grad) g_h.resize(n);
  double value = 0.0;
  double d_nu = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double w = weights.empty() ? 1.0 : weights[t];
    const double h = mu + d[t];
    value -= 0.5 * eta[t] * eta[t];
    if (w == 0.0) {
      if (want_grad) g_h[t] = 0.0;
      continue;
    }
    const double x = y[t] * std::exp(-0.5 * h);
    if (want_grad) {
      const auto ev = density.evaluate(x);
      value += w * (ev.value - 0.5 * h);
      g_h[t] = w * (-0.5 * x * ev.d_x - 0.5);
      d_nu += w * ev.d_nu;
    } else {
      value += w * (density.log_density(x) - 0.5 * h);
    }
  }
  value -= static_cast<double>(n) * kLogSqrt2Pi;

  const auto prior = dist::log_prior_gradient(spec.priors, mu, phi, sigma2, nu);
  value += prior.value;
  // log |d phi / d z|, log |d sigma^2 / d z|, log |d nu / d z|.
  value += log_sech2(z[1]) + std::numbers::ln2 + 2.0 * z[2];
  if (spec.family == dist::Family::Ged || spec.family == dist::Family::StudentT) value += z[3];

  if (!std::isfinite(value)) return -kInf;
  if (!want_grad) return value;

  // Reverse sweep through the AR(1) recursion; adj is dL/dd_t including all
  // downstream dependence.
  double adj = 0.0, d_mu = 0.0, d_phi = 0.0, d_sigma = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    adj = g_h[t] + phi * adj;
    d_mu += g_h[t];
    if (t == 0) {
      grad[k] = sd_first * adj - eta[0];
      d_sigma += adj * eta[0] / std::sqrt(one_m_phi2);
      d_phi += adj * sd_first * eta[0] * phi / one_m_phi2;
    } else {
      grad[k + t] = sigma * adj - eta[t];
      d_sigma += adj * eta[t];
      d_phi += adj * d[t - 1];
    }
  }
  grad[0] = d_mu + prior.d_mu;
  grad[1] = (d_phi + prior.d_phi) * one_m_phi2 - 2.0 * phi;
  grad[2] = d_sigma * sigma + prior.d_sigma2 * 2.0 * sigma2 + 2.0;
  if (spec.has_nu()) {
    switch (spec.family) {
      case dist::Family::Ged:
        grad[3] = (d_nu + prior.d_nu) * nu + 1.0;
        break;
      case dist::Family::StudentT:
        grad[3] = (d_nu + prior.d_nu) * (nu - dist::kStudentNuLowerBound) + 1.0;
        break;
      default:
        grad[3] = d_nu + prior.d_nu;
        break;
    }
  }
  return value;
}

}  // namespace

ModelSpec ModelSpec::make(dist::Family family, const dist::PriorConfig& priors) {
  priors.validate();
  if (dist::has_shape(family) && priors.nu.kind == dist::NuPrior::Kind::None)
    throw std::invalid_argument(std::string("family ") + std::string(dist::family_name(family)) +
                                " needs a prior on nu");
  ModelSpec spec;
  spec.family = family;
  spec.priors = priors;
  if (!dist::has_shape(family)) spec.priors.nu = {};
  return spec;
}

ModelSpec ModelSpec::defaults(dist::Family family) {
  return make(family, dist::PriorConfig::defaults(family));
}

std::vector<double> UnconstrainedState::pack(const ModelSpec& spec) const {
  std::vector<double> flat;
  flat.reserve(spec.dim(eta.size()));
  flat.push_back(mu);
  flat.push_back(phi);
  flat.push_back(sigma);
  if (spec.has_nu()) flat.push_back(nu);
  flat.insert(flat.end(), eta.begin(), eta.end());
  return flat;
}

UnconstrainedState UnconstrainedState::unpack(const ModelSpec& spec,
                                              std::span<const double> flat) {
  const std::size_t k = spec.num_scalars();
  if (flat.size() < k) throw std::invalid_argument("unpack: state shorter than its scalar block");
  UnconstrainedState z;
  z.mu = flat[0];
  z.phi = flat[1];
  z.sigma = flat[2];
  z.nu = spec.has_nu() ? flat[3] : 0.0;
  z.eta.assign(flat.begin() + static_cast<std::ptrdiff_t>(k), flat.end());
  return z;
}

double nu_to_constrained(dist::Family family, double z) {
  switch (family) {
    case dist::Family::Ged: return std::exp(z);
    case dist::Family::StudentT: return dist::kStudentNuLowerBound + std::exp(z);
    case dist::Family::SkewNormal: return z;
    case dist::Family::Gaussian: return 0.0;
  }
  return 0.0;
}

double nu_to_unconstrained(dist::Family family, double nu) {
  switch (family) {
    case dist::Family::Ged: return std::log(nu);
    case dist::Family::StudentT: return std::log(nu - dist::kStudentNuLowerBound);
    case dist::Family::SkewNormal: return nu;
    case dist::Family::Gaussian: return 0.0;
  }
  return 0.0;
}

ParamState to_constrained(const ModelSpec& spec, const UnconstrainedState& z) {
  ParamState theta;
  theta.mu = z.mu;
  theta.phi = std::tanh(z.phi);
  theta.sigma = std::exp(z.sigma);
  theta.nu = nu_to_constrained(spec.family, z.nu);
  const std::size_t n = z.eta.size();
  theta.h.resize(n);
  if (n == 0) return theta;
  double d = theta.sigma / std::sqrt(1.0 - theta.phi * theta.phi) * z.eta[0];
  theta.h[0] = theta.mu + d;
  for (std::size_t t = 1; t < n; ++t) {
    d = theta.phi * d + theta.sigma * z.eta[t];
    theta.h[t] = theta.mu + d;
  }
  return theta;
}

ParamState to_constrained(const ModelSpec& spec, std::span<const double> flat) {
  return to_constrained(spec, UnconstrainedState::unpack(spec, flat));
}

UnconstrainedState to_unconstrained(const ModelSpec& spec, const ParamState& theta) {
  if (!(std::abs(theta.phi) < 1.0) || !(theta.sigma > 0.0))
    throw std::domain_error("to_unconstrained: need |phi| < 1 and sigma > 0");
  if (spec.has_nu() && !dist::in_support(spec.family, theta.nu))
    throw std::domain_error("to_unconstrained: nu outside the family support");
  UnconstrainedState z;
  z.mu = theta.mu;
  z.phi = std::atanh(theta.phi);
  z.sigma = std::log(theta.sigma);
  z.nu = nu_to_unconstrained(spec.family, theta.nu);
  const std::size_t n = theta.h.size();
  z.eta.resize(n);
  if (n == 0) return z;
  z.eta[0] = (theta.h[0] - theta.mu) * std::sqrt(1.0 - theta.phi * theta.phi) / theta.sigma;
  for (std::size_t t = 1; t < n; ++t)
    z.eta[t] = ((theta.h[t] - theta.mu) - theta.phi * (theta.h[t - 1] - theta.mu)) / theta.sigma;
  return z;
}

Evaluation log_posterior(const ModelSpec& spec, std::span<const double> z,
                         std::span<const double> y) {
  check_inputs(spec, z.size(), y);
  Evaluation out;
  out.gradient.assign(z.size(), 0.0);
  out.value = evaluate(spec, z, y, {}, out.gradient);
  return out;
}

Evaluation log_posterior(const ModelSpec& spec, const UnconstrainedState& z,
                         std::span<const double> y) {
  const auto flat = z.pack(spec);
  return log_posterior(spec, std::span<const double>(flat), y);
}

std::vector<double> pointwise_loglik(const ModelSpec& spec, const ParamState& theta,
                                     std::span<const double> y) {
  if (theta.h.size() != y.size())
    throw std::invalid_argument("pointwise_loglik: h has " + std::to_string(theta.h.size()) +
                                " entries but y has " + std::to_string(y.size()));
  const dist::ErrorDensity density(dist::ErrorFamily{spec.family, theta.nu});
  std::vector<double> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (!std::isfinite(y[t]))
      throw std::invalid_argument("pointwise_loglik: non-finite return at index " +
                                  std::to_string(t));
    const double h = theta.h[t];
    out[t] = density.log_density(y[t] * std::exp(-0.5 * h)) - 0.5 * h;
  }
  return out;
}

Posterior::Posterior(ModelSpec spec, std::vector<double> y)
    : spec_(std::move(spec)), y_(std::move(y)) {
  check_inputs(spec_, spec_.dim(y_.size()), y_);
}

void Posterior::set_observation_weights(std::vector<double> weights) {
  if (weights.size() != y_.size())
    throw std::invalid_argument("observation weights must match the number of observations");
  weights_ = std::move(weights);
}

void Posterior::exclude_observation(std::size_t index) {
  if (index >= y_.size()) throw std::out_of_range("exclude_observation: index out of range");
  if (weights_.empty()) weights_.assign(y_.size(), 1.0);
  weights_[index] = 0.0;
}

double Posterior::log_density_gradient(std::span<const double> q, std::span<double> grad) const {
  return evaluate(spec_, q, y_, weights_, grad);
}

std::vector<double> Posterior::initial_point(Rng& rng) const {
  // Scalars start near a moment-based guess; innovations start small.
  double mean_sq = 0.0;
  for (double v : y_) mean_sq += v * v;
  mean_sq /= static_cast<double>(y_.size());
  auto jitter = [&](double width) { return width * (2.0 * uniform01(rng) - 1.0); };

  UnconstrainedState z;
  z.mu = std::log(mean_sq + 1e-300) + jitter(0.5);
  z.phi = std::atanh(0.9) + jitter(0.3);
  z.sigma = std::log(0.2) + jitter(0.3);
  switch (spec_.family) {
    case dist::Family::Ged: z.nu = std::log(1.8) + jitter(0.2); break;
    case dist::Family::StudentT: z.nu = std::log(6.0) + jitter(0.3); break;
    case dist::Family::SkewNormal: z.nu = jitter(0.2); break;
    case dist::Family::Gaussian: break;
  }
  z.eta.resize(y_.size());
  for (double& e : z.eta) e = jitter(1.0);
  return z.pack(spec_);
}

}  // namespace svhmc::model
