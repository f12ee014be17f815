#include "svhmc/dist.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace svhmc::dist {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2 = std::numbers::ln2;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInvSqrt2 = 0.70710678118654752440;

double lgam(double x) { return boost::math::lgamma(x); }
double digam(double x) { return boost::math::digamma(x); }

// log(erfc(w)), finite for every finite w.
double log_erfc(double w) {
  if (w < 26.0) return std::log(boost::math::erfc(w));
  // Asymptotic expansion; erfc underflows past w ~ 26.5.
  const double inv2 = 1.0 / (w * w);
  const double series =
      1.0 + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875 + inv2 * (6.5625 - inv2 * 29.53125))));
  return -w * w - std::log(w) - 0.5 * std::log(std::numbers::pi) + std::log(series);
}

// d/dz log(1 + erf(z)) = 2/sqrt(pi) exp(-z^2) / erfc(-z).
double dlog_one_plus_erf(double z) {
  return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-z * z - log_erfc(-z));
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("cannot parse " + std::string(what) + " value '" +
                                std::string(s) + "'");
  return v;
}

std::vector<double> parse_list(std::string_view s, std::string_view what) {
  std::vector<double> out;
  while (true) {
    auto comma = s.find(',');
    out.push_back(parse_number(s.substr(0, comma), what));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Ged: return "ged";
    case Family::StudentT: return "student-t";
    case Family::SkewNormal: return "skew-normal";
  }
  return "unknown";
}

std::string_view family_label(Family f) {
  switch (f) {
    case Family::Gaussian: return "Gaussian";
    case Family::Ged: return "GED";
    case Family::StudentT: return "t-Student";
    case Family::SkewNormal: return "Skew-Normal";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::Gaussian, Family::Ged, Family::StudentT, Family::SkewNormal})
    if (name == family_name(f)) return f;
  if (name == "t" || name == "student") return Family::StudentT;
  throw std::invalid_argument("unknown error family '" + std::string(name) +
                              "' (expected gaussian|ged|student-t|skew-normal)");
}

bool in_support(Family kind, double nu) noexcept {
  switch (kind) {
    case Family::Gaussian: return true;
    case Family::Ged: return std::isfinite(nu) && nu > 0.0;
    case Family::StudentT: return std::isfinite(nu) && nu > kStudentNuLowerBound;
    case Family::SkewNormal: return std::isfinite(nu);
  }
  return false;
}

void check_support(const ErrorFamily& family) {
  if (in_support(family.kind, family.nu)) return;
  std::string bound = family.kind == Family::Ged        ? "nu > 0"
                      : family.kind == Family::StudentT ? "nu > 4"
                                                        : "finite nu";
  throw std::domain_error(std::string(family_name(family.kind)) +
                          ": shape parameter nu=" + format_number(family.nu) +
                          " outside support (" + bound + ")");
}

ErrorDensity::ErrorDensity(const ErrorFamily& family) : family_(family) {
  check_support(family_);
  const double nu = family_.nu;
  switch (family_.kind) {
    case Family::Gaussian:
    case Family::SkewNormal:
      log_norm_ = -kLogSqrt2Pi;
      break;
    case Family::Ged: {
      const double inv = 1.0 / nu;
      log_lambda_ = -inv * kLog2 + 0.5 * (lgam(inv) - lgam(3.0 * inv));
      log_norm_ = std::log(nu) - log_lambda_ - (1.0 + inv) * kLog2 - lgam(inv);
      dlog_lambda_ = inv * inv * (kLog2 + 0.5 * (3.0 * digam(3.0 * inv) - digam(inv)));
      dlog_norm_ = inv - dlog_lambda_ + inv * inv * (kLog2 + digam(inv));
      break;
    }
    case Family::StudentT:
      log_norm_ = lgam(0.5 * (nu + 1.0)) - lgam(0.5 * nu) -
                  0.5 * std::log(std::numbers::pi * (nu - 2.0));
      dlog_norm_ = 0.5 * digam(0.5 * (nu + 1.0)) - 0.5 * digam(0.5 * nu) -
                   0.5 / (nu - 2.0);
      break;
  }
}

ErrorDensity::Eval ErrorDensity::evaluate(double x) const {
  const double nu = family_.nu;
  switch (family_.kind) {
    case Family::Gaussian:
      return {log_norm_ - 0.5 * x * x, -x, 0.0};
    case Family::Ged: {
      if (x == 0.0) return {log_norm_, 0.0, dlog_norm_};
      const double log_u = std::log(std::abs(x)) - log_lambda_;
      const double u_nu = std::exp(nu * log_u);
      return {log_norm_ - 0.5 * u_nu, -0.5 * nu * u_nu / x,
              dlog_norm_ - 0.5 * u_nu * (log_u - nu * dlog_lambda_)};
    }
    case Family::StudentT: {
      const double a = nu - 2.0;
      const double l1p = std::log1p(x * x / a);
      return {log_norm_ - 0.5 * (nu + 1.0) * l1p, -(nu + 1.0) * x / (a + x * x),
              dlog_norm_ - 0.5 * l1p + 0.5 * (nu + 1.0) * x * x / (a * (a + x * x))};
    }
    case Family::SkewNormal: {
      const double z = nu * x * kInvSqrt2;
      const double r = dlog_one_plus_erf(z);
      return {log_norm_ - 0.5 * x * x + log_erfc(-z),
              -x + r * nu * kInvSqrt2, r * x * kInvSqrt2};
    }
  }
  return {0.0, 0.0, 0.0};
}

double ErrorDensity::log_density(double x) const {
  switch (family_.kind) {
    case Family::Gaussian: return log_norm_ - 0.5 * x * x;
    case Family::Ged:
      if (x == 0.0) return log_norm_;
      return log_norm_ - 0.5 * std::exp(family_.nu * (std::log(std::abs(x)) - log_lambda_));
    case Family::StudentT:
      return log_norm_ - 0.5 * (family_.nu + 1.0) * std::log1p(x * x / (family_.nu - 2.0));
    case Family::SkewNormal:
      return log_norm_ - 0.5 * x * x + log_erfc(-family_.nu * x * kInvSqrt2);
  }
  return 0.0;
}

double ErrorDensity::dlog_dx(double x) const { return evaluate(x).d_x; }
double ErrorDensity::dlog_dnu(double x) const { return evaluate(x).d_nu; }

double log_density(const ErrorFamily& family, double x) {
  return ErrorDensity(family).log_density(x);
}

Slope dlog_density_dx(const ErrorFamily& family, double x) {
  ErrorDensity d(family);
  const bool kink = family.kind == Family::Ged && family.nu < 2.0 && x == 0.0;
  return {kink ? 0.0 : d.dlog_dx(x), !kink};
}

double dlog_density_dnu(const ErrorFamily& family, double x) {
  if (family.kind == Family::Gaussian)
    throw std::invalid_argument("dlog_density_dnu: the Gaussian family has no shape parameter");
  return ErrorDensity(family).dlog_dnu(x);
}

double sample_error(const ErrorFamily& family, Rng& rng) {
  check_support(family);
  const double nu = family.nu;
  switch (family.kind) {
    case Family::Gaussian:
      return std_normal(rng);
    case Family::Ged: {
      // |x/lambda|^nu / 2 ~ Gamma(1/nu, 1).
      const double log_lambda = -kLog2 / nu + 0.5 * (lgam(1.0 / nu) - lgam(3.0 / nu));
      const double g = std::gamma_distribution<double>(1.0 / nu, 1.0)(rng);
      const double mag = std::exp(log_lambda + std::log(2.0 * g) / nu);
      return uniform01(rng) < 0.5 ? -mag : mag;
    }
    case Family::StudentT: {
      const double t = std::student_t_distribution<double>(nu)(rng);
      return t * std::sqrt((nu - 2.0) / nu);
    }
    case Family::SkewNormal: {
      const double u0 = std_normal(rng);
      const double u1 = std_normal(rng);
      return u1 <= nu * u0 ? u0 : -u0;
    }
  }
  return 0.0;
}

double ged_excess_kurtosis(double nu) {
  if (!(nu > 0.0)) throw std::domain_error("ged_excess_kurtosis: nu must be > 0");
  return std::exp(lgam(1.0 / nu) + lgam(5.0 / nu) - 2.0 * lgam(3.0 / nu)) - 3.0;
}

// ---------------------------------------------------------------------------
// Priors

double BetaPrior::implied_mean() const { return 2.0 * a / (a + b) - 1.0; }

double BetaPrior::implied_sd() const {
  const double s = a + b;
  return 2.0 * std::sqrt(a * b / (s * s * (s + 1.0)));
}

SigmaPrior SigmaPrior::gamma_chisq(double b_sigma) {
  return {Kind::Gamma, 0.5, 1.0 / (2.0 * b_sigma)};
}
SigmaPrior SigmaPrior::inv_gamma(double shape, double scale) {
  return {Kind::InvGamma, shape, scale};
}
SigmaPrior SigmaPrior::inv_gamma_halves(double a_sigma, double b_sigma) {
  return {Kind::InvGamma, 0.5 * a_sigma, 0.5 * b_sigma};
}
SigmaPrior SigmaPrior::scaled_inv_chisq(double df, double scale) {
  return {Kind::ScaledInvChiSq, df, scale};
}

SigmaPrior SigmaPrior::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("sigma prior '" + std::string(text) +
                                "' must look like gamma:B, invgamma:a,b or invchisq:c,s");
  auto kind = text.substr(0, colon);
  auto args = parse_list(text.substr(colon + 1), "sigma prior");
  SigmaPrior p;
  if (kind == "gamma" && args.size() == 1) {
    p = gamma_chisq(args[0]);
    if (!(args[0] > 0.0)) throw std::invalid_argument("gamma:B requires B > 0");
    return p;
  }
  if (kind == "invgamma" && args.size() == 2) p = inv_gamma(args[0], args[1]);
  else if (kind == "invchisq" && args.size() == 2) p = scaled_inv_chisq(args[0], args[1]);
  else
    throw std::invalid_argument("sigma prior '" + std::string(text) +
                                "' must look like gamma:B, invgamma:a,b or invchisq:c,s");
  if (!(p.first > 0.0) || !(p.second > 0.0))
    throw std::invalid_argument("sigma prior parameters must be positive");
  return p;
}

std::string SigmaPrior::to_string() const {
  switch (kind) {
    case Kind::Gamma: return "gamma:" + format_number(1.0 / (2.0 * second));
    case Kind::InvGamma: return "invgamma:" + format_number(first) + "," + format_number(second);
    case Kind::ScaledInvChiSq:
      return "invchisq:" + format_number(first) + "," + format_number(second);
  }
  return {};
}

std::string SigmaPrior::label() const {
  switch (kind) {
    case Kind::Gamma: return "G(1/2, " + format_number(second) + ")";
    case Kind::InvGamma: return "G^-1(" + format_number(first) + ", " + format_number(second) + ")";
    case Kind::ScaledInvChiSq:
      return "Inv-chi2(" + format_number(first) + ", " + format_number(second) + ")";
  }
  return {};
}

double SigmaPrior::log_density(double s2) const {
  if (!(s2 > 0.0) || !std::isfinite(s2)) return -kInf;
  switch (kind) {
    case Kind::Gamma:
      return first * std::log(second) - lgam(first) + (first - 1.0) * std::log(s2) - second * s2;
    case Kind::InvGamma:
      return first * std::log(second) - lgam(first) - (first + 1.0) * std::log(s2) - second / s2;
    case Kind::ScaledInvChiSq: {
      const double h = 0.5 * first;
      return h * std::log(h) - lgam(h) + first * std::log(second) - (h + 1.0) * std::log(s2) -
             h * second * second / s2;
    }
  }
  return -kInf;
}

double SigmaPrior::dlog_density(double s2) const {
  switch (kind) {
    case Kind::Gamma: return (first - 1.0) / s2 - second;
    case Kind::InvGamma: return -(first + 1.0) / s2 + second / (s2 * s2);
    case Kind::ScaledInvChiSq: {
      const double h = 0.5 * first;
      return -(h + 1.0) / s2 + h * second * second / (s2 * s2);
    }
  }
  return 0.0;
}

NuPrior NuPrior::defaults_for(Family f) {
  switch (f) {
    case Family::Gaussian: return {};
    case Family::Ged: return {Kind::ScaledInvChiSq, 10.0, 0.05};
    case Family::StudentT: return {Kind::TruncatedExp, kStudentNuPriorRate, kStudentNuLowerBound};
    case Family::SkewNormal: return {Kind::Normal, 0.0, std::sqrt(kSkewNormalNuPriorVariance)};
  }
  return {};
}

double NuPrior::log_density(double nu) const {
  switch (kind) {
    case Kind::None: return 0.0;
    case Kind::ScaledInvChiSq: {
      if (!(nu > 0.0)) return -kInf;
      const double h = 0.5 * first;
      return h * std::log(h) - lgam(h) + first * std::log(second) - (h + 1.0) * std::log(nu) -
             h * second * second / nu;
    }
    case Kind::TruncatedExp:
      if (!(nu >= second)) return -kInf;
      return std::log(first) - first * (nu - second);
    case Kind::Normal: {
      const double z = (nu - first) / second;
      return -kLogSqrt2Pi - std::log(second) - 0.5 * z * z;
    }
  }
  return -kInf;
}

double NuPrior::dlog_density(double nu) const {
  switch (kind) {
    case Kind::None: return 0.0;
    case Kind::ScaledInvChiSq: {
      const double h = 0.5 * first;
      return -(h + 1.0) / nu + h * second * second / (nu * nu);
    }
    case Kind::TruncatedExp: return -first;
    case Kind::Normal: return -(nu - first) / (second * second);
  }
  return 0.0;
}

PriorConfig PriorConfig::defaults(Family f) {
  PriorConfig p;
  p.nu = NuPrior::defaults_for(f);
  return p;
}

void PriorConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid prior: ") + what);
  };
  require(mu.sd > 0.0 && std::isfinite(mu.mean), "mu prior needs finite mean and sd > 0");
  require(phi.a > 0.5 && phi.b > 0.5, "phi Beta shapes must exceed 1/2");
  require(sigma2.first > 0.0 && sigma2.second > 0.0, "sigma2 prior parameters must be positive");
  switch (nu.kind) {
    case NuPrior::Kind::None: break;
    case NuPrior::Kind::ScaledInvChiSq:
      require(nu.first > 0.0 && nu.second > 0.0, "nu Inv-chi2 df and scale must be positive");
      break;
    case NuPrior::Kind::TruncatedExp:
      require(nu.first > 0.0, "nu truncated-exponential rate must be positive");
      break;
    case NuPrior::Kind::Normal:
      require(nu.second > 0.0, "nu normal prior sd must be positive");
      break;
  }
}

PriorGradient log_prior_gradient(const PriorConfig& priors, double mu, double phi,
                                 double sigma2, double nu) {
  PriorGradient g;
  if (!(phi > -1.0 && phi < 1.0) || !(sigma2 > 0.0)) {
    g.value = -kInf;
    return g;
  }
  const double zm = (mu - priors.mu.mean) / priors.mu.sd;
  g.value = -kLogSqrt2Pi - std::log(priors.mu.sd) - 0.5 * zm * zm;
  g.d_mu = -zm / priors.mu.sd;

  const double a = priors.phi.a, b = priors.phi.b;
  g.value += -kLog2 - std::log(boost::math::beta(a, b)) +
             (a - 1.0) * std::log(0.5 * (1.0 + phi)) + (b - 1.0) * std::log(0.5 * (1.0 - phi));
  g.d_phi = (a - 1.0) / (1.0 + phi) - (b - 1.0) / (1.0 - phi);

  g.value += priors.sigma2.log_density(sigma2);
  g.d_sigma2 = priors.sigma2.dlog_density(sigma2);

  if (priors.nu.kind != NuPrior::Kind::None) {
    g.value += priors.nu.log_density(nu);
    g.d_nu = priors.nu.dlog_density(nu);
  }
  return g;
}

double log_prior(const PriorConfig& priors, const ParamState& theta) {
  return log_prior_gradient(priors, theta.mu, theta.phi, theta.sigma * theta.sigma, theta.nu).value;
}

}  // namespace svhmc::dist
