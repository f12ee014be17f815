#include "svhmc/modsel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace svhmc::modsel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double pointwise_se(std::span<const double> pointwise) {
  return std::sqrt(static_cast<double>(pointwise.size()) * sample_variance(pointwise));
}

}  // namespace

LogLikMatrix::LogLikMatrix(std::size_t draws, std::size_t observations)
    : draws_(draws), obs_(observations), data_(draws * observations, 0.0) {}

LogLikMatrix LogLikMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  LogLikMatrix m(rows.size(), rows.front().size());
  for (std::size_t s = 0; s < rows.size(); ++s) m.set_row(s, rows[s]);
  return m;
}

void LogLikMatrix::set_row(std::size_t s, std::span<const double> row) {
  if (row.size() != obs_) throw std::invalid_argument("LogLikMatrix::set_row: wrong row length");
  for (std::size_t i = 0; i < obs_; ++i) (*this)(s, i) = row[i];
}

std::vector<double> LogLikMatrix::row_sums() const {
  std::vector<double> out(draws_, 0.0);
  for (std::size_t i = 0; i < obs_; ++i) {
    const auto col = column(i);
    for (std::size_t s = 0; s < draws_; ++s) out[s] += col[s];
  }
  return out;
}

void LogLikMatrix::check_finite() const {
  for (std::size_t i = 0; i < obs_; ++i)
    for (std::size_t s = 0; s < draws_; ++s)
      if (!std::isfinite((*this)(s, i)))
        throw std::invalid_argument("log-likelihood matrix has a non-finite entry at (s=" +
                                    std::to_string(s) + ", i=" + std::to_string(i) + ")");
}

DicResult dic(double loglik_at_posterior_mean, std::span<const double> per_draw_loglik) {
  if (per_draw_loglik.empty()) throw std::invalid_argument("dic: no draws");
  const double mean_ll = std::accumulate(per_draw_loglik.begin(), per_draw_loglik.end(), 0.0) /
                         static_cast<double>(per_draw_loglik.size());
  DicResult r;
  r.p_dic = 2.0 * (loglik_at_posterior_mean - mean_ll);
  r.dic = -2.0 * loglik_at_posterior_mean + 2.0 * r.p_dic;
  return r;
}

WaicResult waic(const LogLikMatrix& loglik) {
  if (loglik.draws() < 2) throw std::invalid_argument("waic: need at least 2 draws");
  loglik.check_finite();
  const double log_s = std::log(static_cast<double>(loglik.draws()));
  WaicResult r;
  r.pointwise.resize(loglik.observations());
  for (std::size_t i = 0; i < loglik.observations(); ++i) {
    const auto col = loglik.column(i);
    const double lpd_i = log_sum_exp(col) - log_s;
    const double p_i = sample_variance(col);
    r.lpd += lpd_i;
    r.p_waic += p_i;
    r.pointwise[i] = lpd_i - p_i;
  }
  r.elpd = r.lpd - r.p_waic;
  r.se = pointwise_se(r.pointwise);
  return r;
}

double gpd_quantile(double p, double k, double sigma) {
  if (k == 0.0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

GpdFit gpd_fit(std::span<const double> excesses, const PsisConfig& config) {
  const std::size_t n = excesses.size();
  if (n < 5) throw std::invalid_argument("gpd_fit: need at least 5 tail values");
  std::vector<double> x(excesses.begin(), excesses.end());
  std::sort(x.begin(), x.end());
  if (x.front() < 0.0) throw std::invalid_argument("gpd_fit: exceedances must be non-negative");
  if (x.back() - x.front() <= 1e-14 * std::abs(x.back())) return {-kInf, 0.0, true};

  const double nd = static_cast<double>(n);
  const std::size_t m = config.grid_points + static_cast<std::size_t>(std::floor(std::sqrt(nd)));
  const double x_star = x[static_cast<std::size_t>(std::floor(nd / 4.0 + 0.5)) - 1];
  const double x_max = x.back();

  std::vector<double> theta(m), log_lik(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double jj = static_cast<double>(j + 1);
    theta[j] = 1.0 / x_max +
               (1.0 - std::sqrt(static_cast<double>(m) / (jj - 0.5))) / (config.grid_prior * x_star);
    // Profile log-likelihood with k(theta) = -mean log(1 - theta x).
    const double b = -theta[j];
    double kb = 0.0;
    for (double v : x) kb += std::log1p(b * v);
    kb /= nd;
    log_lik[j] = nd * (std::log(b / kb) - kb - 1.0);
  }
  const double lse = log_sum_exp(log_lik);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(log_lik[j] - lse);
    if (std::isfinite(w)) theta_hat += theta[j] * w;
  }
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= nd;
  const double sigma = -k / theta_hat;
  const double a = config.k_prior_strength;
  k = (nd * k + 0.5 * a) / (nd + a);
  if (!std::isfinite(sigma)) return {kInf, kInf, false};
  return {k, sigma, false};
}

SmoothedWeights psis_smooth(std::span<const double> log_ratios, const PsisConfig& config) {
  const std::size_t s = log_ratios.size();
  SmoothedWeights out;
  out.log_weights.assign(log_ratios.begin(), log_ratios.end());
  auto& lw = out.log_weights;
  const double max_lr = *std::max_element(lw.begin(), lw.end());
  for (double& v : lw) v -= max_lr;
  out.k = kInf;

  const double sd = static_cast<double>(s);
  const auto tail_len = static_cast<std::size_t>(
      std::min(std::ceil(config.tail_fraction * sd), std::ceil(config.tail_sqrt_factor * std::sqrt(sd))));
  if (tail_len >= config.min_tail && tail_len < s) {
    std::vector<std::size_t> order(s);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
    const std::size_t first_tail = s - tail_len;
    const double cutoff = lw[order[first_tail - 1]];
    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> excess(tail_len);
    for (std::size_t j = 0; j < tail_len; ++j)
      excess[j] = std::max(0.0, std::exp(lw[order[first_tail + j]]) - exp_cutoff);
    const auto fit = gpd_fit(excess, config);
    out.k = fit.k;
    if (!fit.degenerate && std::isfinite(fit.k)) {
      for (std::size_t j = 0; j < tail_len; ++j) {
        const double p = (static_cast<double>(j) + 0.5) / static_cast<double>(tail_len);
        lw[order[first_tail + j]] = std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
      }
    }
  }
  // Truncate at the largest raw weight, then normalize.
  for (double& v : lw) v = std::min(v, 0.0);
  const double norm = log_sum_exp(lw);
  for (double& v : lw) v -= norm;
  return out;
}

PsisResult psis_loo(const LogLikMatrix& loglik, const PsisConfig& config) {
  if (loglik.draws() < config.min_draws)
    throw std::invalid_argument("psis_loo: need at least " + std::to_string(config.min_draws) +
                                " draws, got " + std::to_string(loglik.draws()));
  loglik.check_finite();
  const std::size_t n = loglik.observations();
  const double log_s = std::log(static_cast<double>(loglik.draws()));
  PsisResult r;
  r.pointwise.resize(n);
  r.pareto_k.resize(n);
  double lpd = 0.0;
  std::vector<double> ratios(loglik.draws()), terms(loglik.draws());
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = loglik.column(i);
    for (std::size_t s = 0; s < col.size(); ++s) ratios[s] = -col[s];
    const auto sw = psis_smooth(ratios, config);
    for (std::size_t s = 0; s < col.size(); ++s) terms[s] = sw.log_weights[s] + col[s];
    r.pointwise[i] = log_sum_exp(terms);
    r.pareto_k[i] = sw.k;
    if (sw.k > config.k_warn) ++r.k_warnings;
    r.elpd += r.pointwise[i];
    lpd += log_sum_exp(col) - log_s;
  }
  r.p_loo = lpd - r.elpd;
  r.se = pointwise_se(r.pointwise);
  return r;
}

CriteriaReport criteria_report(std::string model, double loglik_at_posterior_mean,
                               const LogLikMatrix& loglik, const PsisConfig& config) {
  CriteriaReport rep;
  rep.model = std::move(model);
  rep.n = loglik.observations();
  const auto d = dic(loglik_at_posterior_mean, loglik.row_sums());
  rep.dic = d.dic;
  rep.p_dic = d.p_dic;
  const auto w = waic(loglik);
  rep.waic = w.deviance();
  rep.se_waic = 2.0 * w.se;
  rep.p_waic = w.p_waic;
  rep.pointwise_waic = w.pointwise;
  const auto l = psis_loo(loglik, config);
  rep.loo = l.deviance();
  rep.se_loo = 2.0 * l.se;
  rep.p_loo = l.p_loo;
  rep.pareto_k = l.pareto_k;
  rep.k_warnings = l.k_warnings;
  rep.pointwise_loo = l.pointwise;
  return rep;
}

namespace {

std::vector<RankEntry> rank_by(std::span<const CriteriaReport> reports,
                               double CriteriaReport::*field,
                               std::vector<double> CriteriaReport::*pointwise) {
  std::vector<RankEntry> rows(reports.size());
  for (std::size_t m = 0; m < reports.size(); ++m) {
    rows[m].model = m;
    rows[m].value = reports[m].*field;
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RankEntry& a, const RankEntry& b) { return a.value < b.value; });
  const auto& best = reports[rows.front().model];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].rank = r + 1;
    rows[r].diff = rows[r].value - rows.front().value;
    if (pointwise == nullptr) continue;
    const auto& a = reports[rows[r].model].*pointwise;
    const auto& b = best.*pointwise;
    if (a.size() != b.size() || a.empty()) continue;
    std::vector<double> delta(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) delta[i] = a[i] - b[i];
    rows[r].se_diff = 2.0 * pointwise_se(delta);
  }
  return rows;
}

}  // namespace

Ranking compare(std::span<const CriteriaReport> reports) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports");
  for (const auto& r : reports)
    if (r.n != reports.front().n)
      throw std::invalid_argument("compare: reports cover different numbers of observations (" +
                                  std::to_string(r.n) + " vs " + std::to_string(reports.front().n) +
                                  ")");
  Ranking out;
  for (const auto& r : reports) out.models.push_back(r.model);
  out.dic = rank_by(reports, &CriteriaReport::dic, nullptr);
  out.waic = rank_by(reports, &CriteriaReport::waic, &CriteriaReport::pointwise_waic);
  out.loo = rank_by(reports, &CriteriaReport::loo, &CriteriaReport::pointwise_loo);
  return out;
}

}  // namespace svhmc::modsel
