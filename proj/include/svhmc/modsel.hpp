#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svhmc::modsel {

/// S x n matrix of log p(y_i | theta^(s)). Stored column-major so every
/// observation's S draws are contiguous.
class LogLikMatrix {
 public:
  LogLikMatrix() = default;
  LogLikMatrix(std::size_t draws, std::size_t observations);
  static LogLikMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t draws() const { return draws_; }
  std::size_t observations() const { return obs_; }

  double operator()(std::size_t s, std::size_t i) const { return data_[i * draws_ + s]; }
  double& operator()(std::size_t s, std::size_t i) { return data_[i * draws_ + s]; }
  std::span<const double> column(std::size_t i) const { return {data_.data() + i * draws_, draws_}; }
  std::span<double> column(std::size_t i) { return {data_.data() + i * draws_, draws_}; }
  void set_row(std::size_t s, std::span<const double> row);
  /// Sum over observations for each draw.
  std::vector<double> row_sums() const;

  /// Throws std::invalid_argument naming the first non-finite entry (s, i).
  void check_finite() const;

 private:
  std::size_t draws_ = 0;
  std::size_t obs_ = 0;
  std::vector<double> data_;
};

/// Pareto-smoothing constants (tail size, estimator grid, k-hat thresholds).
struct PsisConfig {
  double tail_fraction = 0.2;      // M <= ceil(tail_fraction * S)
  double tail_sqrt_factor = 3.0;   // M <= ceil(tail_sqrt_factor * sqrt(S))
  std::size_t min_tail = 5;
  std::size_t min_draws = 20;
  std::size_t grid_points = 30;    // profile grid size is grid_points + floor(sqrt(M))
  double grid_prior = 3.0;
  double k_prior_strength = 10.0;  // k <- (M k + 0.5 a) / (M + a)
  double k_good = 0.5;
  double k_warn = 0.7;
};

struct DicResult {
  double dic = 0.0;
  double p_dic = 0.0;
};

/// p_D = 2 (log p(y | theta_bar) - mean_s log p(y | theta^s)), DIC = -2 log p(y | theta_bar) + 2 p_D.
DicResult dic(double loglik_at_posterior_mean, std::span<const double> per_draw_loglik);

struct WaicResult {
  double lpd = 0.0;
  double p_waic = 0.0;
  double elpd = 0.0;  // lpd - p_waic
  double se = 0.0;    // sqrt(n * var(pointwise elpd)), elpd scale
  std::vector<double> pointwise;

  double deviance() const { return -2.0 * elpd; }
};

WaicResult waic(const LogLikMatrix& loglik);

struct GpdFit {
  double k = 0.0;
  double sigma = 0.0;
  bool degenerate = false;  // all-equal tail; k is -inf
};

/// Generalized Pareto fit to exceedances (values >= 0 over the threshold) by
/// the profile-likelihood grid estimator, with the weak prior pulling k
/// toward 0.5. Throws std::invalid_argument for fewer than 5 values.
GpdFit gpd_fit(std::span<const double> excesses, const PsisConfig& config = {});

/// GPD quantile for probability p.
double gpd_quantile(double p, double k, double sigma);

struct PsisResult {
  double elpd = 0.0;
  double se = 0.0;
  double p_loo = 0.0;  // lpd - elpd
  std::vector<double> pointwise;
  std::vector<double> pareto_k;  // -inf when the tail was degenerate
  std::size_t k_warnings = 0;   // count of k > k_warn

  double deviance() const { return -2.0 * elpd; }
};

/// Smoothed normalized log weights for one observation's raw log ratios.
struct SmoothedWeights {
  std::vector<double> log_weights;
  double k = 0.0;
};
SmoothedWeights psis_smooth(std::span<const double> log_ratios, const PsisConfig& config = {});

PsisResult psis_loo(const LogLikMatrix& loglik, const PsisConfig& config = {});

/// One row of a model comparison table (deviance scale throughout).
struct CriteriaReport {
  std::string model;
  std::size_t n = 0;
  double dic = 0.0;
  double p_dic = 0.0;
  double waic = 0.0;
  double se_waic = 0.0;
  double p_waic = 0.0;
  double loo = 0.0;
  double se_loo = 0.0;
  double p_loo = 0.0;
  std::vector<double> pareto_k;
  std::size_t k_warnings = 0;
  std::vector<double> pointwise_waic;  // elpd scale
  std::vector<double> pointwise_loo;   // elpd scale
};

CriteriaReport criteria_report(std::string model, double loglik_at_posterior_mean,
                               const LogLikMatrix& loglik, const PsisConfig& config = {});

struct RankEntry {
  std::size_t model = 0;  // registration index
  std::size_t rank = 0;   // 1-based
  double value = 0.0;
  double diff = 0.0;                // value - best value
  std::optional<double> se_diff;    // paired SE of the difference (WAIC/LOO)
};

struct Ranking {
  std::vector<std::string> models;
  std::vector<RankEntry> dic;
  std::vector<RankEntry> waic;
  std::vector<RankEntry> loo;
};

/// Ascending ranking under each criterion; ties keep registration order.
/// Throws std::invalid_argument when the reports cover different n.
Ranking compare(std::span<const CriteriaReport> reports);

}  // namespace svhmc::modsel
