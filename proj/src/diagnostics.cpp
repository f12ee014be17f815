#include "svhmc/diagnostics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace svhmc::hmc {

namespace {

// Splits each chain into halves (dropping the middle draw of odd chains).
Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Replaces values by normal scores of their pooled fractional ranks (ties get
// the average rank).
Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  all.reserve(total);
  for (std::size_t k = 0, flat = 0; k < chains.size(); ++k)
    for (double v : chains[k]) all.emplace_back(v, flat++);
  std::sort(all.begin(), all.end());

  std::vector<double> ranks(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && all[j + 1].first == all[i].first) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[all[m].second] = r;
    i = j + 1;
  }

  const boost::math::normal_distribution<double> normal;
  const double s = static_cast<double>(total);
  Chains out(chains.size());
  for (std::size_t k = 0, flat = 0; k < chains.size(); ++k) {
    out[k].resize(chains[k].size());
    for (double& v : out[k]) v = boost::math::quantile(normal, (ranks[flat++] - 0.375) / (s + 0.25));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

bool usable(const Chains& chains, std::size_t min_chains) {
  if (chains.size() < min_chains) return false;
  for (const auto& c : chains)
    if (c.size() < 4 || c.size() != chains.front().size()) return false;
  return true;
}

std::optional<double> rhat_of(const Chains& chains) {
  const std::size_t m = chains.size();
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means(m), vars(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = mean(chains[k]);
    vars[k] = sample_var(chains[k]);
  }
  const double w = mean(vars);
  const double b = n * sample_var(means);
  if (!(w > 0.0)) return std::nullopt;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Multi-chain ESS with Geyer's initial positive and monotone sequences.
std::optional<double> ess_of(const Chains& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), vars(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = mean(chains[k]);
    vars[k] = sample_var(chains[k]);
  }
  const double w = mean(vars);
  const double var_plus =
      (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + (m > 1 ? sample_var(means) : 0.0);
  if (!(var_plus > 0.0)) return std::nullopt;

  // Biased autocovariance at lag t averaged over chains.
  auto mean_autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i)
        s += (chains[k][i] - means[k]) * (chains[k][i + lag] - means[k]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) {
    if (lag == 0) return 1.0;
    return 1.0 - (w - mean_autocov(lag)) / var_plus;
  };

  std::vector<double> rho_hat{1.0, rho(1)};
  // Paired sums P_k = rho_{2k} + rho_{2k+1}; stop at the first negative one.
  std::size_t t = 0;
  std::vector<double> paired{rho_hat[0] + rho_hat[1]};
  while (true) {
    const std::size_t next = t + 2;
    if (next + 4 >= n) break;
    const double p = rho(next) + rho(next + 1);
    if (!(p > 0.0)) break;
    paired.push_back(p);
    t = next;
  }
  // Initial monotone sequence.
  for (std::size_t k = 1; k < paired.size(); ++k) paired[k] = std::min(paired[k], paired[k - 1]);
  const double tau = -1.0 + 2.0 * std::accumulate(paired.begin(), paired.end(), 0.0);
  const double total = static_cast<double>(m * n);
  const double tau_floor = 1.0 / std::log10(total);
  return total / std::max(tau, tau_floor);
}

}  // namespace

std::optional<double> split_rhat(const Chains& chains) {
  if (!usable(chains, 2)) return std::nullopt;
  return rhat_of(rank_normalize(split(chains)));
}

std::optional<double> ess_bulk(const Chains& chains) {
  if (!usable(chains, 2)) return std::nullopt;
  return ess_of(rank_normalize(split(chains)));
}

std::optional<double> ess_mean(const Chains& chains) {
  if (!usable(chains, 1)) return std::nullopt;
  return ess_of(split(chains));
}

std::optional<double> mcse_mean(const Chains& chains) {
  const auto ess = ess_mean(chains);
  if (!ess) return std::nullopt;
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  return std::sqrt(sample_var(pooled) / *ess);
}

std::optional<double> Diagnostics::max_rhat() const {
  std::optional<double> out;
  for (const auto& c : coordinates)
    if (c.rhat) out = out ? std::max(*out, *c.rhat) : *c.rhat;
  return out;
}

std::optional<double> Diagnostics::min_ess() const {
  std::optional<double> out;
  for (const auto& c : coordinates)
    if (c.ess) out = out ? std::min(*out, *c.ess) : *c.ess;
  return out;
}

Diagnostics diagnostics(const DrawStore& store, std::span<const std::size_t> coords) {
  Diagnostics out;
  out.divergences = store.divergences();
  out.total_draws = store.total_draws();
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(store.dim);
    std::iota(all.begin(), all.end(), 0);
    coords = all;
  }
  for (std::size_t j : coords) {
    const auto chains = store.coordinate(j);
    out.coordinates.push_back({j, split_rhat(chains), ess_bulk(chains)});
  }
  return out;
}

}  // namespace svhmc::hmc
