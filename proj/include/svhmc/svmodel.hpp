#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svhmc/dist.hpp"
#include "svhmc/param_state.hpp"
#include "svhmc/target.hpp"

namespace svhmc::model {

/// One SV model: observation-error family plus priors. The observation scale
/// beta is fixed at 1, so mu carries the volatility level.
struct ModelSpec {
  dist::Family family = dist::Family::Gaussian;
  dist::PriorConfig priors = dist::PriorConfig::defaults(dist::Family::Gaussian);

  static ModelSpec make(dist::Family family, const dist::PriorConfig& priors);
  static ModelSpec defaults(dist::Family family);

  bool has_nu() const { return dist::has_shape(family); }
  std::size_t num_scalars() const { return has_nu() ? 4 : 3; }
  std::size_t dim(std::size_t n) const { return num_scalars() + n; }
};

/// Unconstrained coordinates. The latent path is non-centered: eta holds the
/// standardized innovations, and h is rebuilt from them by the AR(1)
/// recursion with the stationary start.
struct UnconstrainedState {
  double mu = 0.0;     // mu
  double phi = 0.0;    // atanh(phi)
  double sigma = 0.0;  // log(sigma)
  double nu = 0.0;     // log(nu) GED, log(nu - 4) StudentT, nu SkewNormal
  std::vector<double> eta;

  /// Flat layout used by the sampler: [mu, phi, sigma, (nu), eta_1..eta_n].
  std::vector<double> pack(const ModelSpec& spec) const;
  static UnconstrainedState unpack(const ModelSpec& spec, std::span<const double> flat);
};

double nu_to_constrained(dist::Family family, double z);
double nu_to_unconstrained(dist::Family family, double nu);

ParamState to_constrained(const ModelSpec& spec, const UnconstrainedState& z);
ParamState to_constrained(const ModelSpec& spec, std::span<const double> flat);
UnconstrainedState to_unconstrained(const ModelSpec& spec, const ParamState& theta);

struct Evaluation {
  double value = 0.0;
  std::vector<double> gradient;  // flat layout, see UnconstrainedState::pack
};

/// Joint log posterior on the unconstrained space, including every log-Jacobian
/// and the standard-normal density of the innovations, with its exact gradient.
/// Throws std::invalid_argument on length mismatch or non-finite returns.
Evaluation log_posterior(const ModelSpec& spec, std::span<const double> z,
                         std::span<const double> y);
Evaluation log_posterior(const ModelSpec& spec, const UnconstrainedState& z,
                         std::span<const double> y);

/// log p(y_t | h_t, nu) for every t.
std::vector<double> pointwise_loglik(const ModelSpec& spec, const ParamState& theta,
                                     std::span<const double> y);

/// Sampler target for one data set. Observation weights (default all 1)
/// scale each observation's likelihood term; a zero weight drops y_t from the
/// fit while keeping h_t in the latent path, which is how leave-one-out
/// refits are expressed.
class Posterior final : public hmc::Target {
 public:
  Posterior(ModelSpec spec, std::vector<double> y);

  void set_observation_weights(std::vector<double> weights);
  void exclude_observation(std::size_t index);

  std::size_t dim() const override { return spec_.dim(y_.size()); }
  double log_density_gradient(std::span<const double> q, std::span<double> grad) const override;
  std::vector<double> initial_point(Rng& rng) const override;

  const ModelSpec& spec() const { return spec_; }
  std::span<const double> data() const { return y_; }

 private:
  ModelSpec spec_;
  std::vector<double> y_;
  std::vector<double> weights_;
};

}  // namespace svhmc::model
