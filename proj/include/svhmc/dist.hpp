#pragma once

#include <string>
#include <string_view>

#include "svhmc/param_state.hpp"
#include "svhmc/rng.hpp"

namespace svhmc::dist {

enum class Family { Gaussian, Ged, StudentT, SkewNormal };

/// CLI spelling: gaussian, ged, student-t, skew-normal.
std::string_view family_name(Family f);
/// Display spelling used in comparison tables (Gaussian, GED, ...).
std::string_view family_label(Family f);
Family parse_family(std::string_view name);
inline bool has_shape(Family f) { return f != Family::Gaussian; }

/// Zero-mean observation error with unit scale. GED and StudentT are
/// variance one; SkewNormal is the location-0/scale-1 skew-normal, whose
/// mean is delta*sqrt(2/pi) for shape nu != 0.
struct ErrorFamily {
  Family kind = Family::Gaussian;
  double nu = 0.0;

  static ErrorFamily gaussian() { return {Family::Gaussian, 0.0}; }
  static ErrorFamily ged(double nu) { return {Family::Ged, nu}; }
  static ErrorFamily student_t(double nu) { return {Family::StudentT, nu}; }
  static ErrorFamily skew_normal(double nu) { return {Family::SkewNormal, nu}; }
};

/// Throws std::domain_error naming nu when the shape is outside its support
/// (GED: nu > 0, StudentT: nu > 4, SkewNormal: finite).
void check_support(const ErrorFamily& family);
bool in_support(Family kind, double nu) noexcept;

/// Log-density with the shape-dependent constants hoisted out of the
/// per-observation loop. Construction validates the support.
class ErrorDensity {
 public:
  struct Eval {
    double value;
    double d_x;
    double d_nu;
  };

  explicit ErrorDensity(const ErrorFamily& family);

  double log_density(double x) const;
  /// d/dx. For GED with nu < 2 the density has a kink at 0, where this
  /// returns the subgradient 0.
  double dlog_dx(double x) const;
  /// d/dnu; 0 for Gaussian.
  double dlog_dnu(double x) const;
  Eval evaluate(double x) const;

  const ErrorFamily& family() const { return family_; }

 private:
  ErrorFamily family_;
  // GED: log normalizer, log lambda, d log lambda / d nu, d log normalizer / d nu.
  // StudentT: log normalizer, d log normalizer / d nu.
  double log_norm_ = 0.0;
  double log_lambda_ = 0.0;
  double dlog_lambda_ = 0.0;
  double dlog_norm_ = 0.0;
};

double log_density(const ErrorFamily& family, double x);

struct Slope {
  double value;
  bool smooth;  // false at a non-differentiable point (GED nu<2, x=0)
};
Slope dlog_density_dx(const ErrorFamily& family, double x);

/// Throws std::invalid_argument for the Gaussian family, which has no shape.
double dlog_density_dnu(const ErrorFamily& family, double x);

double sample_error(const ErrorFamily& family, Rng& rng);

/// Gamma(1/nu) Gamma(5/nu) / Gamma(3/nu)^2 - 3.
double ged_excess_kurtosis(double nu);

// ---------------------------------------------------------------------------
// Priors

/// Variance of the N(0, .) prior on the skew-normal shape.
inline constexpr double kSkewNormalNuPriorVariance = 5.0;
/// Rate of the truncated-exponential prior on the Student-t degrees of freedom.
inline constexpr double kStudentNuPriorRate = 1.0 / 3.0;
inline constexpr double kStudentNuLowerBound = 4.0;

struct NormalPrior {
  double mean = -10.0;
  double sd = 1.0;
};

/// phi = 2 phi* - 1 with phi* ~ Beta(a, b).
struct BetaPrior {
  double a = 20.0;
  double b = 1.5;

  double implied_mean() const;
  double implied_sd() const;
};

/// Prior density for sigma_eta^2, evaluated in sigma_eta^2.
struct SigmaPrior {
  enum class Kind { Gamma, InvGamma, ScaledInvChiSq };
  Kind kind = Kind::Gamma;
  double first = 0.5;   // Gamma: shape; InvGamma: shape; ScaledInvChiSq: df
  double second = 5.0;  // Gamma: rate;  InvGamma: scale; ScaledInvChiSq: scale

  /// B_sigma * chi^2_1 = Gamma(1/2, rate 1/(2 B_sigma)).
  static SigmaPrior gamma_chisq(double b_sigma);
  /// InvGamma(shape, scale) with the parameters taken as given.
  static SigmaPrior inv_gamma(double shape, double scale);
  /// InvGamma(a_sigma/2, b_sigma/2).
  static SigmaPrior inv_gamma_halves(double a_sigma, double b_sigma);
  /// Scaled inverse chi-square with df degrees of freedom and scale s.
  static SigmaPrior scaled_inv_chisq(double df, double scale);
  /// Parses `gamma:B`, `invgamma:shape,scale`, `invchisq:df,scale`.
  static SigmaPrior parse(std::string_view text);

  double log_density(double s2) const;
  double dlog_density(double s2) const;
  /// Round-trips through parse().
  std::string to_string() const;
  /// Display form, e.g. "G(1/2, 5)".
  std::string label() const;
};

struct NuPrior {
  enum class Kind { None, ScaledInvChiSq, TruncatedExp, Normal };
  Kind kind = Kind::None;
  double first = 0.0;   // ScaledInvChiSq: df;    TruncatedExp: rate;  Normal: mean
  double second = 0.0;  // ScaledInvChiSq: scale; TruncatedExp: lower; Normal: sd

  /// The family default: Inv-chi2(10, 0.05) for GED, truncated exponential
  /// (rate 1/3, lower bound 4) for StudentT, N(0, 5) for SkewNormal.
  static NuPrior defaults_for(Family f);

  double log_density(double nu) const;
  double dlog_density(double nu) const;
};

struct PriorConfig {
  NormalPrior mu;
  BetaPrior phi;
  SigmaPrior sigma2 = SigmaPrior::gamma_chisq(0.1);
  NuPrior nu;

  /// mu ~ N(-10, 1), phi* ~ Beta(20, 1.5), sigma2 ~ Gamma(1/2, 5), family nu prior.
  static PriorConfig defaults(Family f);
  /// Throws std::invalid_argument on non-positive scales or Beta shapes <= 1/2.
  void validate() const;
};

struct PriorGradient {
  double value = 0.0;
  double d_mu = 0.0;
  double d_phi = 0.0;
  double d_sigma2 = 0.0;
  double d_nu = 0.0;
};

/// Sum of the independent log prior densities; nu is used only when the
/// prior has a nu component. Returns -inf outside the support.
double log_prior(const PriorConfig& priors, const ParamState& theta);
PriorGradient log_prior_gradient(const PriorConfig& priors, double mu,
                                 double phi, double sigma2, double nu);

}  // namespace svhmc::dist
