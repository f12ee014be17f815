#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "svhmc/simstudy.hpp"
#include "svhmc/svmodel.hpp"

using namespace svhmc;
using namespace svhmc::model;

namespace {

const dist::Family kFamilies[] = {dist::Family::Gaussian, dist::Family::Ged, dist::Family::StudentT,
                                  dist::Family::SkewNormal};

std::vector<double> random_returns(std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  std::vector<double> y(n);
  for (double& v : y) v = 0.01 * std_normal(rng);
  return y;
}

// A point in the bulk of the posterior for 1% daily returns.
std::vector<double> random_state(const ModelSpec& spec, std::size_t n, Rng& rng) {
  UnconstrainedState z;
  z.mu = -9.2 + 0.4 * std_normal(rng);
  z.phi = std::atanh(0.9) + 0.3 * std_normal(rng);
  z.sigma = std::log(0.2) + 0.3 * std_normal(rng);
  switch (spec.family) {
    case dist::Family::Ged: z.nu = std::log(1.5) + 0.2 * std_normal(rng); break;
    case dist::Family::StudentT: z.nu = std::log(5.0) + 0.3 * std_normal(rng); break;
    case dist::Family::SkewNormal: z.nu = 0.8 * std_normal(rng); break;
    case dist::Family::Gaussian: break;
  }
  z.eta.resize(n);
  for (double& e : z.eta) e = std_normal(rng);
  return z.pack(spec);
}

double likelihood_sum(const ModelSpec& spec, std::span<const double> z, std::span<const double> y) {
  const auto pw = pointwise_loglik(spec, to_constrained(spec, z), y);
  return std::accumulate(pw.begin(), pw.end(), 0.0);
}

}  // namespace

TEST_CASE("constrained/unconstrained round trip") {
  Rng rng = make_stream(3);
  for (auto f : kFamilies) {
    const auto spec = ModelSpec::defaults(f);
    for (int rep = 0; rep < 20; ++rep) {
      const auto flat = random_state(spec, 50, rng);
      const auto back = to_unconstrained(spec, to_constrained(spec, flat)).pack(spec);
      REQUIRE(back.size() == flat.size());
      for (std::size_t i = 0; i < flat.size(); ++i) CHECK(std::abs(back[i] - flat[i]) <= 1e-12 * std::max(1.0, std::abs(flat[i])));
    }
  }
}

TEST_CASE("zero innovations give a flat path at mu") {
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  UnconstrainedState z;
  z.mu = -8.5;
  z.phi = 1.3;
  z.sigma = -1.0;
  z.eta.assign(30, 0.0);
  const auto th = to_constrained(spec, z);
  for (double h : th.h) CHECK(h == -8.5);

  z.phi = 0.0;  // phi = 0: h_t = mu + sigma eta_t, independent across t
  z.eta = {1.0, -2.0, 0.5};
  const auto iid = to_constrained(spec, z);
  const double sigma = std::exp(-1.0);
  CHECK(iid.phi == 0.0);
  for (std::size_t t = 0; t < 3; ++t) CHECK(iid.h[t] == doctest::Approx(-8.5 + sigma * z.eta[t]).epsilon(1e-15));
}

TEST_CASE("latent path has the stationary AR(1) variance") {
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  Rng rng = make_stream(8);
  UnconstrainedState z;
  z.mu = 0.0;
  z.phi = std::atanh(0.95);
  z.sigma = std::log(0.15);
  z.eta.resize(100000);
  for (double& e : z.eta) e = std_normal(rng);
  const auto th = to_constrained(spec, z);
  double m = 0, s = 0;
  for (double h : th.h) m += h;
  m /= th.h.size();
  for (double h : th.h) s += (h - m) * (h - m);
  s /= th.h.size() - 1;
  const double expected = 0.15 * 0.15 / (1 - 0.95 * 0.95);  // 0.230769...
  CHECK(std::abs(s / expected - 1.0) < 0.05);
}

TEST_CASE("log_posterior at a pinned point") {
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  const std::vector<double> z(spec.dim(2), 0.0);
  const std::vector<double> y{0.0, 0.0};
  // mpmath, 30 digits:
  //   -2 log(2pi)                        observations at h = 0 and eta density
  //   -log(2pi)/2 - 50                   mu ~ N(-10, 1) at 0
  //   log Beta(0.5; 20, 1.5) + log(1/2)  phi* = 1/2
  //   log Gamma(1; shape 1/2, rate 5)    sigma^2 = 1
  //   + log 2                            Jacobians at z = 0
  CHECK(log_posterior(spec, z, y).value == doctest::Approx(-68.245884762539035352).epsilon(1e-13));
}

TEST_CASE("gradient matches central differences for every family and sigma prior") {
  const std::vector<dist::SigmaPrior> sigma_priors{dist::SigmaPrior::gamma_chisq(0.1),
                                                   dist::SigmaPrior::inv_gamma(2.5, 0.025),
                                                   dist::SigmaPrior::scaled_inv_chisq(10, 0.05)};
  const auto y = random_returns(50, 21);
  Rng rng = make_stream(4);
  for (auto f : kFamilies)
    for (const auto& sp : sigma_priors) {
      auto priors = dist::PriorConfig::defaults(f);
      priors.sigma2 = sp;
      const auto spec = ModelSpec::make(f, priors);
      for (int rep = 0; rep < 3; ++rep) {
        auto z = random_state(spec, y.size(), rng);
        const auto ev = log_posterior(spec, z, y);
        REQUIRE(std::isfinite(ev.value));
        for (std::size_t i = 0; i < z.size(); ++i) {
          const double h = 1e-5;
          const double keep = z[i];
          z[i] = keep + h;
          const double up = log_posterior(spec, z, y).value;
          z[i] = keep - h;
          const double dn = log_posterior(spec, z, y).value;
          z[i] = keep;
          const double fd = (up - dn) / (2 * h);
          CHECK_MESSAGE(std::abs(ev.gradient[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)),
                        dist::family_name(f) << ' ' << sp.label() << " coord " << i);
        }
      }
    }
}

TEST_CASE("only the likelihood depends on y") {
  Rng rng = make_stream(6);
  for (auto f : kFamilies) {
    const auto spec = ModelSpec::defaults(f);
    const auto y1 = random_returns(25, 1);
    const auto y2 = random_returns(25, 2);
    const auto z = random_state(spec, 25, rng);
    const double diff = log_posterior(spec, z, y1).value - log_posterior(spec, z, y2).value;
    CHECK(diff == doctest::Approx(likelihood_sum(spec, z, y1) - likelihood_sum(spec, z, y2)).epsilon(1e-10));
  }
}

TEST_CASE("scaling returns by 2 is a shift of h by 2 log 2") {
  Rng rng = make_stream(7);
  for (auto f : kFamilies) {
    const auto spec = ModelSpec::defaults(f);
    const auto y = random_returns(30, 9);
    auto y2 = y;
    for (double& v : y2) v *= 2.0;
    const auto th = to_constrained(spec, random_state(spec, 30, rng));
    auto shifted = th;
    for (double& h : shifted.h) h += 2.0 * std::numbers::ln2;
    const auto a = pointwise_loglik(spec, shifted, y2);
    const auto b = pointwise_loglik(spec, th, y);
    for (std::size_t t = 0; t < y.size(); ++t) CHECK(a[t] == doctest::Approx(b[t] - std::numbers::ln2).epsilon(1e-12));
  }
}

TEST_CASE("pointwise log-likelihood values") {
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  ParamState th{-9.0, 0.9, 0.2, 0.0, {2.0}};
  const std::vector<double> y{1.0};
  // -log(2pi)/2 - 1 - exp(-2)/2
  CHECK(pointwise_loglik(spec, th, y)[0] == doctest::Approx(-1.98660617482297909).epsilon(1e-14));

  th.h = {0.0, 0.0};
  const std::vector<double> y2{1.0, 2.0};
  CHECK_THROWS_AS((void)pointwise_loglik(spec, th, y), std::invalid_argument);
  const auto pw = pointwise_loglik(spec, th, y2);
  CHECK(pw[0] == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi) - 0.5));
  CHECK(pw[1] == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi) - 2.0));
}

TEST_CASE("GED with nu = 2 reproduces the Gaussian likelihood") {
  const auto g = ModelSpec::defaults(dist::Family::Gaussian);
  const auto ged = ModelSpec::defaults(dist::Family::Ged);
  Rng rng = make_stream(10);
  auto th = to_constrained(g, random_state(g, 100, rng));
  th.nu = 2.0;
  const auto y = random_returns(100, 5);
  const auto a = pointwise_loglik(g, th, y);
  const auto b = pointwise_loglik(ged, th, y);
  for (std::size_t t = 0; t < y.size(); ++t) CHECK(std::abs(a[t] - b[t]) <= 1e-12);
}

TEST_CASE("permuting y and h together leaves the likelihood sum unchanged") {
  const auto spec = ModelSpec::defaults(dist::Family::StudentT);
  Rng rng = make_stream(12);
  auto th = to_constrained(spec, random_state(spec, 60, rng));
  auto y = random_returns(60, 13);
  const auto pw = pointwise_loglik(spec, th, y);
  const double before = std::accumulate(pw.begin(), pw.end(), 0.0);

  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto th2 = th;
  auto y2 = y;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    th2.h[i] = th.h[perm[i]];
    y2[i] = y[perm[i]];
  }
  const auto pw2 = pointwise_loglik(spec, th2, y2);
  CHECK(std::accumulate(pw2.begin(), pw2.end(), 0.0) == doctest::Approx(before).epsilon(1e-12));

  // Shuffling only y changes the joint density, since the path is ordered.
  const auto z = to_unconstrained(spec, th).pack(spec);
  CHECK(log_posterior(spec, z, y).value != log_posterior(spec, z, y2).value);
}

TEST_CASE("input validation") {
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  const std::vector<double> y{0.1, -0.2, 0.3};
  CHECK_THROWS_AS((void)log_posterior(spec, std::vector<double>(spec.dim(2), 0.0), y), std::invalid_argument);
  const std::vector<double> bad{0.1, std::nan(""), 0.3};
  CHECK_THROWS_AS((void)log_posterior(spec, std::vector<double>(spec.dim(3), 0.0), bad), std::invalid_argument);
  CHECK_THROWS_AS((void)Posterior(spec, {0.1}), std::invalid_argument);
  CHECK_THROWS_AS((void)to_unconstrained(spec, ParamState{0.0, 1.0, 0.1, 0.0, {}}), std::domain_error);

  auto priors = dist::PriorConfig::defaults(dist::Family::Ged);
  priors.nu = {};
  CHECK_THROWS_AS((void)ModelSpec::make(dist::Family::Ged, priors), std::invalid_argument);
  CHECK(ModelSpec::defaults(dist::Family::Gaussian).num_scalars() == 3);
  CHECK(ModelSpec::defaults(dist::Family::SkewNormal).num_scalars() == 4);
}

TEST_CASE("Posterior target agrees with log_posterior and honours weights") {
  const auto spec = ModelSpec::defaults(dist::Family::Ged);
  const auto y = random_returns(20, 30);
  Posterior post(spec, y);
  Rng rng = make_stream(31);
  const auto z = random_state(spec, y.size(), rng);
  std::vector<double> g(z.size());
  const double v = post.log_density_gradient(z, g);
  const auto ev = log_posterior(spec, z, y);
  CHECK(v == doctest::Approx(ev.value).epsilon(1e-14));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(ev.gradient[i]).epsilon(1e-12));

  const auto pw = pointwise_loglik(spec, to_constrained(spec, z), y);
  post.exclude_observation(7);
  CHECK(post.log_density_gradient(z, g) == doctest::Approx(v - pw[7]).epsilon(1e-12));
  CHECK_THROWS_AS(post.exclude_observation(20), std::out_of_range);

  std::vector<double> w(y.size(), 1.0);
  w[3] = 0.5;
  post.set_observation_weights(w);
  CHECK(post.log_density_gradient(z, g) == doctest::Approx(v - 0.5 * pw[3]).epsilon(1e-12));
  CHECK_THROWS_AS(post.set_observation_weights({1.0}), std::invalid_argument);

  const auto init = post.initial_point(rng);
  CHECK(init.size() == post.dim());
  CHECK(std::isfinite(post.log_density_gradient(init, g)));
}

TEST_CASE("simulated data sit in the bulk of the posterior at the truth") {
  // Generated series' own path should beat a path from a different seed.
  const auto spec = ModelSpec::defaults(dist::Family::Gaussian);
  Rng rng = make_stream(40);
  const auto s = sim::simulate_sv(-9.0, 0.95, 0.15, dist::ErrorFamily::gaussian(), 500, rng);
  const auto other = sim::simulate_sv(-9.0, 0.95, 0.15, dist::ErrorFamily::gaussian(), 500, rng);
  ParamState truth{-9.0, 0.95, 0.15, 0.0, s.h};
  ParamState wrong{-9.0, 0.95, 0.15, 0.0, other.h};
  const auto zt = to_unconstrained(spec, truth).pack(spec);
  const auto zw = to_unconstrained(spec, wrong).pack(spec);
  CHECK(log_posterior(spec, zt, s.y).value > log_posterior(spec, zw, s.y).value);
}
