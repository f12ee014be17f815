#include <doctest.h>

#include <cmath>
#include <vector>

#include "svhmc/diagnostics.hpp"

using namespace svhmc;
using namespace svhmc::hmc;

namespace {

Chains iid_chains(std::size_t chains, std::size_t draws, std::uint64_t seed, double offset = 0.0) {
  Chains out(chains, std::vector<double>(draws));
  for (std::size_t c = 0; c < chains; ++c) {
    Rng rng = make_stream(seed, c);
    for (double& v : out[c]) v = std_normal(rng) + offset * static_cast<double>(c);
  }
  return out;
}

Chains ar1_chains(std::size_t chains, std::size_t draws, double rho, std::uint64_t seed) {
  Chains out(chains, std::vector<double>(draws));
  const double innov = std::sqrt(1 - rho * rho);
  for (std::size_t c = 0; c < chains; ++c) {
    Rng rng = make_stream(seed, c);
    double x = std_normal(rng);
    for (double& v : out[c]) {
      x = rho * x + innov * std_normal(rng);
      v = x;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("iid draws: R-hat near 1 and ESS near the draw count") {
  const auto c = iid_chains(4, 1000, 1);
  const auto r = split_rhat(c);
  const auto e = ess_bulk(c);
  REQUIRE(r);
  REQUIRE(e);
  CHECK(*r >= 0.99);
  CHECK(*r <= 1.01);
  CHECK(*e >= 0.8 * 4000);
}

TEST_CASE("disjoint chains are flagged") {
  const auto c = iid_chains(2, 500, 2, 10.0);
  CHECK(*split_rhat(c) > 1.5);
}

TEST_CASE("AR(1) draws have the analytic ESS per draw") {
  const auto c = ar1_chains(4, 5000, 0.9, 3);
  const double per_draw = *ess_bulk(c) / 20000.0;
  const double expected = (1 - 0.9) / (1 + 0.9);  // 0.0526
  CHECK(per_draw == doctest::Approx(expected).epsilon(0.5));
  const double mean_per_draw = *ess_mean(c) / 20000.0;
  CHECK(mean_per_draw == doctest::Approx(expected).epsilon(0.5));
}

TEST_CASE("mcse of the mean of iid draws") {
  const auto c = iid_chains(1, 10000, 4);
  CHECK(*mcse_mean(c) == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("diagnostics are unavailable rather than fabricated") {
  CHECK_FALSE(split_rhat(iid_chains(1, 1000, 5)).has_value());
  CHECK_FALSE(split_rhat(iid_chains(2, 3, 5)).has_value());
  CHECK_FALSE(ess_bulk(iid_chains(2, 3, 5)).has_value());
  CHECK_FALSE(split_rhat(Chains(3, std::vector<double>(100, 1.5))).has_value());
  CHECK_FALSE(ess_mean(iid_chains(1, 3, 5)).has_value());
  CHECK(ess_mean(iid_chains(1, 100, 5)).has_value());
  CHECK_FALSE(split_rhat({}).has_value());
}

TEST_CASE("diagnostics over a DrawStore") {
  DrawStore store;
  store.dim = 2;
  for (std::size_t c = 0; c < 3; ++c) {
    ChainDraws ch;
    ch.dim = 2;
    Rng rng = make_stream(9, c);
    for (int s = 0; s < 400; ++s) {
      ch.values.push_back(std_normal(rng));
      ch.values.push_back(5.0 + 2.0 * std_normal(rng));
      ch.accept_stat.push_back(0.8);
      ch.divergent.push_back(s % 100 == 0);
    }
    store.chains.push_back(std::move(ch));
  }
  const auto d = diagnostics(store);
  REQUIRE(d.coordinates.size() == 2);
  CHECK(d.divergences == 12);
  CHECK(d.total_draws == 1200);
  CHECK(*d.max_rhat() < 1.02);
  CHECK(*d.min_ess() > 800);

  const std::size_t only[] = {1};
  const auto one = diagnostics(store, only);
  REQUIRE(one.coordinates.size() == 1);
  CHECK(one.coordinates[0].index == 1);
  CHECK(store.divergence_rate() == doctest::Approx(0.01));
}
