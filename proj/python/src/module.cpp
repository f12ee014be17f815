#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "svhmc/app.hpp"
#include "svhmc/dist.hpp"
#include "svhmc/fit.hpp"
#include "svhmc/io.hpp"
#include "svhmc/modsel.hpp"
#include "svhmc/simstudy.hpp"

namespace py = pybind11;
using namespace svhmc;

namespace {

dist::ErrorFamily error_family(const std::string& family, double nu) {
  dist::ErrorFamily f{dist::parse_family(family), nu};
  if (f.kind == dist::Family::Gaussian) f.nu = 0.0;
  dist::check_support(f);
  return f;
}

modsel::LogLikMatrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("log-likelihood matrix must be 2-D (draws x observations)");
  const auto r = a.unchecked<2>();
  modsel::LogLikMatrix L(static_cast<std::size_t>(r.shape(0)), static_cast<std::size_t>(r.shape(1)));
  for (py::ssize_t s = 0; s < r.shape(0); ++s)
    for (py::ssize_t i = 0; i < r.shape(1); ++i) L(s, i) = r(s, i);
  L.check_finite();
  return L;
}

py::dict criteria_dict(const modsel::CriteriaReport& c) {
  py::dict d;
  d["model"] = c.model;
  d["n"] = c.n;
  d["dic"] = c.dic;
  d["p_dic"] = c.p_dic;
  d["waic"] = c.waic;
  d["se_waic"] = c.se_waic;
  d["p_waic"] = c.p_waic;
  d["loo"] = c.loo;
  d["se_loo"] = c.se_loo;
  d["p_loo"] = c.p_loo;
  d["pareto_k"] = c.pareto_k;
  d["k_warnings"] = c.k_warnings;
  return d;
}

py::dict fit_dict(const fit::FitResult& r) {
  py::dict params;
  for (const auto& p : r.parameters) {
    py::dict e;
    e["mean"] = p.mean;
    e["sd"] = p.sd;
    e["lower"] = p.lower;
    e["upper"] = p.upper;
    e["rhat"] = p.rhat;
    e["ess"] = p.ess;
    params[py::str(p.name)] = e;
  }
  py::dict vol;
  vol["level"] = r.volatility.level;
  vol["mean"] = r.volatility.mean;
  vol["lower"] = r.volatility.lower;
  vol["upper"] = r.volatility.upper;

  py::dict out;
  out["family"] = std::string(dist::family_name(r.spec.family));
  out["parameters"] = params;
  out["volatility"] = vol;
  out["divergences"] = r.divergences;
  out["total_draws"] = r.total_draws;
  out["mean_accept"] = r.mean_accept;
  out["step_sizes"] = r.step_sizes;
  out["criteria"] = r.criteria ? py::object(criteria_dict(*r.criteria)) : py::object(py::none());
  return out;
}

}  // namespace

PYBIND11_MODULE(_svhmc, m) {
  m.doc() = "Bayesian stochastic volatility with NUTS and predictive model criteria";
  m.attr("__version__") = std::string(app::toolkit_version());

  m.def("log_density",
        [](const std::string& family, double nu, const std::vector<double>& x) {
          const auto f = error_family(family, nu);
          std::vector<double> out;
          out.reserve(x.size());
          for (double v : x) out.push_back(dist::log_density(f, v));
          return out;
        },
        py::arg("family"), py::arg("nu"), py::arg("x"),
        "Log density of the standardized error family at each point of x.");

  m.def("simulate",
        [](double mu, double phi, double sigma, std::size_t n, const std::string& family, double nu,
           std::uint64_t seed) {
          Rng rng = make_stream(seed);
          const auto s = sim::simulate_sv(mu, phi, sigma, error_family(family, nu), n, rng);
          py::dict d;
          d["y"] = s.y;
          d["h"] = s.h;
          return d;
        },
        py::arg("mu"), py::arg("phi"), py::arg("sigma"), py::arg("n"), py::arg("family") = "gaussian",
        py::arg("nu") = 0.0, py::arg("seed") = 1);

  m.def("fit",
        [](const std::vector<double>& y, const std::string& family, std::size_t warmup, std::size_t draws,
           std::size_t chains, std::uint64_t seed, double target_accept, std::optional<std::string> sigma_prior,
           bool criteria) {
          const auto f = dist::parse_family(family);
          auto priors = dist::PriorConfig::defaults(f);
          if (sigma_prior) priors.sigma2 = dist::SigmaPrior::parse(*sigma_prior);
          hmc::SamplerConfig c;
          c.warmup = warmup;
          c.draws = draws;
          c.chains = chains;
          c.seed = seed;
          c.target_accept = target_accept;
          fit::FitOptions opts;
          opts.criteria = criteria;
          fit::FitResult r;
          {
            py::gil_scoped_release release;
            r = fit::fit_sv(model::ModelSpec::make(f, priors), y, c, opts);
          }
          return fit_dict(r);
        },
        py::arg("y"), py::arg("family") = "gaussian", py::arg("warmup") = 1000, py::arg("draws") = 1000,
        py::arg("chains") = 4, py::arg("seed") = 1, py::arg("target_accept") = 0.8,
        py::arg("sigma_prior") = py::none(), py::arg("criteria") = true,
        "Fit the SV model to percent returns y and summarize the posterior.");

  m.def("waic",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& loglik) {
          const auto w = modsel::waic(to_matrix(loglik));
          py::dict d;
          d["elpd"] = w.elpd;
          d["lpd"] = w.lpd;
          d["p_waic"] = w.p_waic;
          d["se"] = w.se;
          d["pointwise"] = w.pointwise;
          return d;
        },
        py::arg("loglik"));

  m.def("psis_loo",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& loglik) {
          const auto r = modsel::psis_loo(to_matrix(loglik));
          py::dict d;
          d["elpd"] = r.elpd;
          d["se"] = r.se;
          d["p_loo"] = r.p_loo;
          d["pointwise"] = r.pointwise;
          d["pareto_k"] = r.pareto_k;
          d["k_warnings"] = r.k_warnings;
          return d;
        },
        py::arg("loglik"));

  m.def("gpd_fit",
        [](const std::vector<double>& excesses) {
          const auto g = modsel::gpd_fit(excesses);
          return py::make_tuple(g.k, g.sigma);
        },
        py::arg("excesses"), "Shape and scale of a generalized Pareto fit to non-negative exceedances.");

  m.def("describe",
        [](const std::vector<double>& values) {
          const auto d = io::describe(values);
          py::dict out;
          out["T"] = d.count;
          out["mean"] = d.mean;
          out["sd"] = d.sd;
          out["skewness"] = d.skewness;
          out["kurtosis"] = d.kurtosis;
          return out;
        },
        py::arg("values"));

  m.def("returns_from_prices",
        [](const std::vector<double>& prices) { return io::from_prices(prices).values; }, py::arg("prices"));

  py::register_exception<io::InputError>(m, "InputError", PyExc_ValueError);
}
