#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "svhmc/diagnostics.hpp"
#include "svhmc/hmc.hpp"
#include "svhmc/simstudy.hpp"
#include "svhmc/svmodel.hpp"

using namespace svhmc;
using namespace svhmc::hmc;

namespace {

// N(0, diag(var)).
class DiagGaussian final : public Target {
 public:
  explicit DiagGaussian(std::vector<double> var) : var_(std::move(var)) {}
  std::size_t dim() const override { return var_.size(); }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const override {
    double lp = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      lp -= 0.5 * q[i] * q[i] / var_[i];
      g[i] = -q[i] / var_[i];
    }
    return lp;
  }

 private:
  std::vector<double> var_;
};

// Bivariate normal, unit variances, correlation rho.
class CorrelatedGaussian final : public Target {
 public:
  explicit CorrelatedGaussian(double rho) : rho_(rho) {}
  std::size_t dim() const override { return 2; }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const override {
    const double c = 1.0 / (1.0 - rho_ * rho_);
    g[0] = -c * (q[0] - rho_ * q[1]);
    g[1] = -c * (q[1] - rho_ * q[0]);
    return -0.5 * c * (q[0] * q[0] - 2 * rho_ * q[0] * q[1] + q[1] * q[1]);
  }

 private:
  double rho_;
};

// Neal's funnel: v ~ N(0, 9), x_i | v ~ N(0, exp(v)), i = 1..dim-1.
class Funnel final : public Target {
 public:
  explicit Funnel(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const override {
    const double v = q[0];
    const double ev = std::exp(-v);
    const double k = static_cast<double>(dim_ - 1);
    double lp = -v * v / 18.0 - 0.5 * k * v;
    g[0] = -v / 9.0 - 0.5 * k;
    for (std::size_t i = 1; i < dim_; ++i) {
      lp -= 0.5 * q[i] * q[i] * ev;
      g[0] += 0.5 * q[i] * q[i] * ev;
      g[i] = -q[i] * ev;
    }
    return lp;
  }

 private:
  std::size_t dim_;
};

// A non-quadratic potential so that the leapfrog Jacobian is not trivially 1.
class Quartic final : public Target {
 public:
  std::size_t dim() const override { return 2; }
  double log_density_gradient(std::span<const double> q, std::span<double> g) const override {
    g[0] = -q[0] * q[0] * q[0] - 0.3 * q[1];
    g[1] = -q[1] - 0.3 * q[0];
    return -0.25 * std::pow(q[0], 4) - 0.5 * q[1] * q[1] - 0.3 * q[0] * q[1];
  }
};

PhasePoint point(const Target& t, std::vector<double> q, std::vector<double> p) {
  PhasePoint z;
  z.q = std::move(q);
  z.p = std::move(p);
  refresh(t, z);
  return z;
}

SamplerConfig fast_config(std::size_t warmup, std::size_t draws, std::size_t chains, std::uint64_t seed) {
  SamplerConfig c;
  c.warmup = warmup;
  c.draws = draws;
  c.chains = chains;
  c.seed = seed;
  return c;
}

double pooled_mean(const Chains& chains) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    s += std::accumulate(c.begin(), c.end(), 0.0);
    n += c.size();
  }
  return s / static_cast<double>(n);
}

double pooled_variance(const Chains& chains) {
  const double m = pooled_mean(chains);
  double s = 0;
  std::size_t n = 0;
  for (const auto& c : chains)
    for (double v : c) {
      s += (v - m) * (v - m);
      ++n;
    }
  return s / static_cast<double>(n - 1);
}

}  // namespace

TEST_CASE("leapfrog conserves energy on the harmonic oscillator") {
  const DiagGaussian t({1.0});
  auto z = point(t, {1.0}, {0.0});
  const double h0 = hamiltonian(z, {});
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(leapfrog(t, z, 0.01));
    worst = std::max(worst, std::abs(hamiltonian(z, {}) - h0));
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("zero leapfrog steps are the identity") {
  const DiagGaussian t({1.0, 2.0});
  const auto z = point(t, {0.3, -0.7}, {1.1, 0.2});
  auto copy = z;
  for (int i = 0; i < 0; ++i) leapfrog(t, copy, 0.1);
  CHECK(copy.q == z.q);
  CHECK(copy.p == z.p);
}

TEST_CASE("leapfrog is reversible") {
  Rng rng = make_stream(1);
  std::vector<double> var(10);
  for (double& v : var) v = 0.2 + 3.0 * uniform01(rng);
  const DiagGaussian t(var);
  std::vector<double> q(10), p(10), inv(10);
  for (std::size_t i = 0; i < 10; ++i) {
    q[i] = std_normal(rng);
    p[i] = std_normal(rng);
    inv[i] = 0.5 + uniform01(rng);
  }
  auto z = point(t, q, p);
  for (int i = 0; i < 50; ++i) leapfrog(t, z, 0.07, inv);
  for (double& v : z.p) v = -v;
  for (int i = 0; i < 50; ++i) leapfrog(t, z, 0.07, inv);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::abs(z.q[i] - q[i]) <= 1e-10);
    CHECK(std::abs(-z.p[i] - p[i]) <= 1e-10);
  }
}

TEST_CASE("leapfrog preserves phase-space volume") {
  const Quartic t;
  const std::vector<double> x0{0.8, -0.4, 0.5, 1.2};  // q0 q1 p0 p1
  auto map = [&](const std::vector<double>& x) {
    auto z = point(t, {x[0], x[1]}, {x[2], x[3]});
    for (int i = 0; i < 5; ++i) leapfrog(t, z, 0.2);
    return std::vector<double>{z.q[0], z.q[1], z.p[0], z.p[1]};
  };
  double jac[4][4];
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    auto up = x0, dn = x0;
    up[j] += h;
    dn[j] -= h;
    const auto fu = map(up), fd = map(dn);
    for (int i = 0; i < 4; ++i) jac[i][j] = (fu[i] - fd[i]) / (2 * h);
  }
  // Determinant by Gaussian elimination with partial pivoting.
  double det = 1;
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(jac[r][c]) > std::abs(jac[piv][c])) piv = r;
    if (piv != c) {
      for (int k = 0; k < 4; ++k) std::swap(jac[c][k], jac[piv][k]);
      det = -det;
    }
    det *= jac[c][c];
    for (int r = c + 1; r < 4; ++r) {
      const double f = jac[r][c] / jac[c][c];
      for (int k = c; k < 4; ++k) jac[r][k] -= f * jac[c][k];
    }
  }
  CHECK(std::abs(det - 1.0) <= 1e-6);
}

TEST_CASE("leapfrog reports a non-finite gradient instead of crashing") {
  struct Cliff final : Target {
    std::size_t dim() const override { return 1; }
    double log_density_gradient(std::span<const double> q, std::span<double> g) const override {
      g[0] = q[0] > 1.0 ? std::nan("") : -q[0];
      return -0.5 * q[0] * q[0];
    }
  } t;
  auto z = point(t, {0.9}, {5.0});
  CHECK_FALSE(leapfrog(t, z, 0.5));
}

TEST_CASE("NUTS recovers the correlated Gaussian mean") {
  const CorrelatedGaussian t(0.9);
  const auto store = run(t, fast_config(1000, 2000, 4, 3));
  for (std::size_t j = 0; j < 2; ++j) {
    const auto c = store.coordinate(j);
    const double se = *mcse_mean(c);
    CHECK_MESSAGE(std::abs(pooled_mean(c)) <= 3 * se, "coord " << j << " mean " << pooled_mean(c) << " mcse " << se);
    CHECK(pooled_variance(c) == doctest::Approx(1.0).epsilon(0.1));
    CHECK(*split_rhat(c) < 1.01);
  }
}

TEST_CASE("NUTS sample variance on a 1-D standard normal") {
  const DiagGaussian t({1.0});
  const auto store = run(t, fast_config(1000, 10000, 1, 5));
  CHECK(std::abs(pooled_variance(store.coordinate(0)) - 1.0) <= 0.05);
}

TEST_CASE("adaptation hits the target acceptance") {
  const DiagGaussian t(std::vector<double>(5, 1.0));
  double acc = 0.0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    SamplerConfig c = fast_config(1000, 2000, 2, seed);
    c.target_accept = 0.8;
    acc += run(t, c).mean_accept_stat() / 8.0;
  }
  CHECK_MESSAGE(acc >= 0.7, "mean accept " << acc);
  CHECK_MESSAGE(acc <= 0.9, "mean accept " << acc);

  // During warmup the dual-averaging iterates average to the target itself.
  SamplerConfig c = fast_config(1000, 1, 1, 3);
  Rng rng = make_stream(3);
  const auto warm = adapt(t, c, std::vector<double>(5, 0.5), rng);
  double warm_acc = 0.0;
  for (std::size_t i = 100; i < warm.accept_stats.size(); ++i) warm_acc += warm.accept_stats[i];
  warm_acc /= static_cast<double>(warm.accept_stats.size() - 100);
  CHECK_MESSAGE(std::abs(warm_acc - 0.8) <= 0.05, "warmup accept " << warm_acc);
}

TEST_CASE("fixed step gives a constant step trace") {
  const DiagGaussian t({1.0, 1.0});
  SamplerConfig c = fast_config(0, 300, 1, 9);
  c.adapt_step_size = false;
  c.mass_matrix = MassMatrix::Unit;
  c.initial_step = 0.3;
  const auto store = run(t, c);
  for (double s : store.chains[0].step_trace) CHECK(s == 0.3);
  CHECK(store.chains[0].step == 0.3);
}

TEST_CASE("adapted diagonal metric follows the target variances") {
  const DiagGaussian t({1.0, 100.0});
  const auto store = run(t, fast_config(1000, 200, 1, 11));
  const auto& inv = store.chains[0].inv_metric;
  REQUIRE(inv.size() == 2);
  const double ratio = inv[1] / inv[0];
  CHECK_MESSAGE(ratio >= 50.0, "ratio " << ratio);
  CHECK_MESSAGE(ratio <= 200.0, "ratio " << ratio);
}

TEST_CASE("warmup windows follow the expanding schedule") {
  const WindowSchedule w(1000);
  // 75 fast, slow windows 25, 50, 100, 200, 500 (last stretched), 50 fast.
  const std::vector<std::size_t> ends{99, 149, 249, 449, 949};
  CHECK(w.window_ends() == ends);
  CHECK_FALSE(w.in_window(74));
  CHECK(w.in_window(75));
  CHECK(w.in_window(949));
  CHECK_FALSE(w.in_window(950));
  CHECK(w.window_end(449));
}

TEST_CASE("dual averaging settles at the acceptance target") {
  StepSizeAdapter a(0.8);
  a.restart(1.0);
  double step = 1.0;
  // Synthetic acceptance that decreases with step: accept = exp(-step).
  for (int i = 0; i < 2000; ++i) step = a.learn(std::exp(-step));
  CHECK(a.final_step() == doctest::Approx(-std::log(0.8)).epsilon(0.05));
}

TEST_CASE("same seed gives identical draws, different seeds do not") {
  const CorrelatedGaussian t(0.5);
  const auto a = run(t, fast_config(200, 300, 2, 42));
  const auto b = run(t, fast_config(200, 300, 2, 42));
  const auto c = run(t, fast_config(200, 300, 2, 43));
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.chains[k].values == b.chains[k].values);
    CHECK(a.chains[k].accept_stat == b.chains[k].accept_stat);
    CHECK(a.chains[k].step_trace == b.chains[k].step_trace);
    CHECK(a.chains[k].values != c.chains[k].values);
  }
  CHECK(a.chains[0].values != a.chains[1].values);
}

TEST_CASE("thread count does not change the draws") {
  const CorrelatedGaussian t(0.5);
  auto c1 = fast_config(200, 200, 3, 8);
  c1.threads = 1;
  auto c3 = c1;
  c3.threads = 3;
  const auto a = run(t, c1), b = run(t, c3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.chains[k].values == b.chains[k].values);
}

TEST_CASE("configuration validation") {
  SamplerConfig c;
  c.draws = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.warmup = 50;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_tree_depth = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  const DiagGaussian t({1.0});
  SamplerConfig bad = fast_config(200, 0, 1, 1);
  CHECK_THROWS_AS((void)run(t, bad), std::invalid_argument);
  // Without adaptation a short warmup is fine.
  SamplerConfig fixed = fast_config(0, 10, 1, 1);
  fixed.adapt_step_size = false;
  fixed.mass_matrix = MassMatrix::Unit;
  CHECK_NOTHROW((void)run(t, fixed));
}

TEST_CASE("tree depth respects the cap") {
  const DiagGaussian t({1.0, 1.0});
  SamplerConfig c = fast_config(0, 200, 1, 13);
  c.adapt_step_size = false;
  c.mass_matrix = MassMatrix::Unit;
  c.initial_step = 0.001;  // would need very deep trees to U-turn
  c.max_tree_depth = 4;
  const auto store = run(t, c);
  for (int d : store.chains[0].tree_depth) CHECK(d <= 4);
  for (int n : store.chains[0].n_leapfrog) CHECK(n <= 15);
}

TEST_CASE("funnel divergences are monotone in the step size") {
  const Funnel t(10);
  std::size_t previous = 0;
  for (double step : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    SamplerConfig c = fast_config(0, 1000, 1, 17);
    c.adapt_step_size = false;
    c.mass_matrix = MassMatrix::Unit;
    c.initial_step = step;
    const auto store = run(t, c);
    const std::size_t d = store.divergences();
    MESSAGE("step " << step << ": " << d << " divergences");
    CHECK(d >= previous);
    previous = d;
  }
  CHECK(previous > 0);
}

TEST_CASE("non-centered SV posterior at phi = 0.99 samples with few divergences") {
  Rng rng = make_stream(99);
  const auto s = sim::simulate_sv(-9.0, 0.99, 0.15, dist::ErrorFamily::gaussian(), 500, rng);
  const model::Posterior post(model::ModelSpec::defaults(dist::Family::Gaussian), s.y);
  SamplerConfig c = fast_config(1000, 1000, 2, 19);
  c.target_accept = 0.9;
  const auto store = run(post, c);
  MESSAGE("divergence rate " << store.divergence_rate());
  CHECK(store.divergence_rate() <= 0.01);
}

TEST_CASE("unit metric run stores an empty inverse metric") {
  const DiagGaussian t({1.0});
  SamplerConfig c = fast_config(200, 100, 1, 2);
  c.mass_matrix = MassMatrix::Unit;
  const auto store = run(t, c);
  CHECK(store.chains[0].step > 0);
  CHECK(store.total_draws() == 100);
  CHECK(store.chains[0].step_trace.size() == 300);
}
