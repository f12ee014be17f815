#include "svhmc/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "svhmc/fit.hpp"
#include "svhmc/numfmt.hpp"

namespace svhmc::sim {

SimulatedSeries simulate_sv(double mu, double phi, double sigma, const dist::ErrorFamily& family,
                            std::size_t n, Rng& rng) {
  if (!(std::abs(phi) < 1.0)) throw std::domain_error("simulate_sv: phi must lie in (-1, 1)");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::domain_error("simulate_sv: sigma must be non-negative");
  if (!std::isfinite(mu)) throw std::domain_error("simulate_sv: mu must be finite");
  dist::check_support(family);

  SimulatedSeries out;
  out.h.resize(n);
  out.y.resize(n);
  if (n == 0) return out;
  out.h[0] = mu + sigma / std::sqrt(1.0 - phi * phi) * std_normal(rng);
  for (std::size_t t = 1; t < n; ++t)
    out.h[t] = mu + phi * (out.h[t - 1] - mu) + sigma * std_normal(rng);
  for (std::size_t t = 0; t < n; ++t)
    out.y[t] = std::exp(0.5 * out.h[t]) * dist::sample_error(family, rng);
  return out;
}

BiasSmse bias_smse(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw std::invalid_argument("bias_smse: no estimates");
  double err = 0.0, sq = 0.0;
  for (double e : estimates) {
    err += e - truth;
    sq += (e - truth) * (e - truth);
  }
  const double m = static_cast<double>(estimates.size());
  return {err / m, std::sqrt(sq / m)};
}

hmc::SamplerConfig SimGrid::desk_sampler() {
  hmc::SamplerConfig c;
  c.warmup = 2000;
  c.draws = 2000;
  c.chains = 4;
  return c;
}

SimGrid SimGrid::desk() { return SimGrid{}; }

SimGrid SimGrid::full() {
  SimGrid g;
  g.replications = 100;
  g.sampler.warmup = 5000;
  g.sampler.draws = 5000;
  return g;
}

void SimGrid::validate() const {
  if (replications < 1) throw std::invalid_argument("SimGrid: replications must be at least 1");
  if (phis.empty() || sigmas.empty() || ns.empty())
    throw std::invalid_argument("SimGrid: every grid axis needs at least one value");
  for (double p : phis)
    if (!(std::abs(p) < 1.0)) throw std::invalid_argument("SimGrid: phi must lie in (-1, 1)");
  for (double s : sigmas)
    if (!(s > 0.0)) throw std::invalid_argument("SimGrid: sigma_eta must be positive");
  for (std::size_t n : ns)
    if (n < 2) throw std::invalid_argument("SimGrid: series length must be at least 2");
  if (!std::isfinite(mu)) throw std::invalid_argument("SimGrid: mu must be finite");
  sampler.validate();
}

Estimate hmc_estimator(const EstimationTask& task) {
  fit::FitOptions opts;
  opts.criteria = false;
  opts.volatility = false;
  const auto res = fit::fit_sv(*task.spec, task.y, task.sampler, opts);
  Estimate e;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& p = res.parameters[j];
    e.means.push_back(p.mean);
    if (p.rhat) e.max_rhat = e.max_rhat ? std::max(*e.max_rhat, *p.rhat) : *p.rhat;
    if (p.ess) e.min_ess = e.min_ess ? std::min(*e.min_ess, *p.ess) : *p.ess;
  }
  e.divergences = res.divergences;
  e.total_draws = res.total_draws;
  return e;
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t cell, std::size_t rep) {
  return derive_seed(master, cell, rep);
}

bool SimReport::budget_breached() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellReport& c) { return c.flagged > 0; });
}

void SimReport::write_csv(std::ostream& os) const {
  auto opt = [](const std::optional<double>& v) { return v ? shortest(*v) : std::string("NA"); };
  os << "n,phi,sigma_eta,parameter,bias,smse,min_ess,max_rhat,divergence_rate\n";
  for (const auto& c : cells)
    for (const auto& r : c.rows)
      os << c.n << ',' << shortest(c.phi) << ',' << shortest(c.sigma) << ',' << r.parameter << ','
         << shortest(r.error.bias) << ',' << shortest(r.error.smse) << ',' << opt(c.min_ess) << ','
         << opt(c.max_rhat) << ',' << shortest(c.divergence_rate) << '\n';
}

std::vector<TrendCheck> smse_trend(const SimReport& report) {
  std::vector<TrendCheck> out;
  for (double phi : report.grid.phis)
    for (double sigma : report.grid.sigmas) {
      const CellReport* first = nullptr;
      const CellReport* last = nullptr;
      for (const auto& c : report.cells) {
        if (c.phi != phi || c.sigma != sigma) continue;
        if (!first || c.n < first->n) first = &c;
        if (!last || c.n > last->n) last = &c;
      }
      if (!first || first == last) continue;
      TrendCheck tc{phi, sigma, 0, false};
      for (std::size_t j = 0; j < first->rows.size(); ++j)
        if (last->rows[j].error.smse <= first->rows[j].error.smse) ++tc.improving;
      tc.holds = tc.improving >= 2;
      out.push_back(tc);
    }
  return out;
}

SimReport run_study(const SimGrid& grid, const model::ModelSpec& spec, const Estimator& estimator) {
  grid.validate();

  struct Job {
    std::size_t cell, rep;
  };
  SimReport report;
  report.grid = grid;
  std::vector<Job> jobs;
  for (double phi : grid.phis)
    for (double sigma : grid.sigmas)
      for (std::size_t n : grid.ns) {
        CellReport c;
        c.n = n;
        c.phi = phi;
        c.sigma = sigma;
        c.replications.resize(grid.replications);
        for (std::size_t r = 0; r < grid.replications; ++r) jobs.push_back({report.cells.size(), r});
        report.cells.push_back(std::move(c));
      }

  std::size_t workers = grid.workers == 0 ? std::thread::hardware_concurrency() : grid.workers;
  workers = std::clamp<std::size_t>(workers, 1, jobs.size());
  hmc::SamplerConfig base = grid.sampler;
  if (workers > 1) base.threads = 1;

  auto run_job = [&](const Job& job) {
    CellReport& cell = report.cells[job.cell];
    const std::uint64_t seed = replication_seed(grid.seed, job.cell, job.rep);
    Rng data_rng = make_stream(seed, 0);
    const auto series = simulate_sv(grid.mu, cell.phi, cell.sigma, grid.data_family, cell.n, data_rng);
    EstimationTask task;
    task.spec = &spec;
    task.y = series.y;
    task.series = &series;
    task.mu = grid.mu;
    task.phi = cell.phi;
    task.sigma = cell.sigma;
    task.sampler = base;
    task.sampler.seed = seed;
    Replication& rep = cell.replications[job.rep];
    rep.index = job.rep;
    rep.seed = seed;
    rep.estimate = estimator(task);
    if (rep.estimate.means.size() < 3)
      throw std::runtime_error("run_study: estimator returned fewer than 3 posterior means");
    const double rate = rep.estimate.total_draws == 0
                            ? 0.0
                            : static_cast<double>(rep.estimate.divergences) /
                                  static_cast<double>(rep.estimate.total_draws);
    rep.over_budget = rate > grid.divergence_budget;
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        run_job(jobs[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  static const char* kNames[] = {"mu", "phi", "sigma"};
  for (auto& cell : report.cells) {
    const double truth[] = {grid.mu, cell.phi, cell.sigma};
    std::size_t div = 0, total = 0;
    for (const auto& rep : cell.replications) {
      div += rep.estimate.divergences;
      total += rep.estimate.total_draws;
      if (rep.over_budget) ++cell.flagged;
      const auto& e = rep.estimate;
      if (e.min_ess) cell.min_ess = cell.min_ess ? std::min(*cell.min_ess, *e.min_ess) : *e.min_ess;
      if (e.max_rhat)
        cell.max_rhat = cell.max_rhat ? std::max(*cell.max_rhat, *e.max_rhat) : *e.max_rhat;
    }
    cell.divergence_rate = total == 0 ? 0.0 : static_cast<double>(div) / static_cast<double>(total);
    for (std::size_t j = 0; j < 3; ++j) {
      ParameterRow row;
      row.parameter = kNames[j];
      row.truth = truth[j];
      for (const auto& rep : cell.replications) row.estimates.push_back(rep.estimate.means[j]);
      row.error = bias_smse(row.estimates, row.truth);
      cell.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace svhmc::sim
