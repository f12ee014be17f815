#include "svhmc/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "svhmc/numfmt.hpp"
#include "svhmc/plot.hpp"

namespace svhmc::app {

namespace fs = std::filesystem;

std::string_view toolkit_version() { return "0.4.0"; }

std::vector<std::string> sensitivity_presets() {
  return {"invgamma:2.5,0.025", "gamma:0.1", "invchisq:10,0.05"};
}

hmc::SamplerConfig sensitivity_sampler() {
  hmc::SamplerConfig c;
  c.warmup = 1250;
  c.draws = 1250;
  c.chains = 2;
  return c;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// JSON has no infinities; they become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json num_array(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::string kind_label(dist::NuPrior::Kind k) {
  switch (k) {
    case dist::NuPrior::Kind::None: return "none";
    case dist::NuPrior::Kind::ScaledInvChiSq: return "scaled-inv-chisq";
    case dist::NuPrior::Kind::TruncatedExp: return "truncated-exponential";
    case dist::NuPrior::Kind::Normal: return "normal";
  }
  return "none";
}

json data_json(const DataOptions& d) {
  return {{"path", d.path}, {"column", d.column}, {"kind", std::string(io::kind_name(d.kind))},
          {"demean", d.demean}};
}

DataOptions data_from_json(const json& j) {
  DataOptions d;
  d.path = j.at("path").get<std::string>();
  d.column = j.at("column").get<std::string>();
  d.kind = io::parse_kind(j.at("kind").get<std::string>());
  d.demean = j.at("demean").get<bool>();
  return d;
}

json families_json(const std::vector<dist::Family>& fams) {
  json a = json::array();
  for (auto f : fams) a.push_back(std::string(dist::family_name(f)));
  return a;
}

std::vector<dist::Family> families_from_json(const json& j) {
  std::vector<dist::Family> out;
  for (const auto& f : j) out.push_back(dist::parse_family(f.get<std::string>()));
  return out;
}

json error_family_json(const dist::ErrorFamily& f) {
  return {{"family", std::string(dist::family_name(f.kind))}, {"nu", f.nu}};
}

dist::ErrorFamily error_family_from_json(const json& j) {
  return {dist::parse_family(j.at("family").get<std::string>()), j.at("nu").get<double>()};
}

model::ModelSpec make_spec(dist::Family family, const std::string& sigma_prior) {
  auto priors = dist::PriorConfig::defaults(family);
  priors.sigma2 = dist::SigmaPrior::parse(sigma_prior);
  return model::ModelSpec::make(family, priors);
}

json manifest(const std::string& command, json options, const std::vector<double>* series) {
  json m = {{"schema_version", kSchemaVersion},
            {"toolkit", "svhmc"},
            {"version", std::string(toolkit_version())},
            {"command", command},
            {"options", std::move(options)}};
  if (series) m["data"] = {{"n", series->size()}, {"fingerprint", io::fingerprint_hex(*series)}};
  return m;
}

std::string manifest_comment(const json& m) { return "manifest " + m.dump(); }

fs::path prepare_out(const std::string& out) {
  const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void check_fingerprint(const json& m, const std::vector<double>& series) {
  if (!m.contains("data")) return;
  const auto want = m["data"].at("fingerprint").get<std::string>();
  const auto got = io::fingerprint_hex(series);
  if (want != got)
    throw io::InputError("data fingerprint " + got + " does not match manifest fingerprint " + want);
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string csv_opt(const std::optional<double>& v) { return v ? shortest(*v) : std::string("NA"); }

// Per-command option (de)serialization; the manifest stores these verbatim.
json options_json(const DescribeCommand& c) { return {{"data", data_json(c.data)}}; }
json options_json(const ReturnsCommand& c) { return {{"data", data_json(c.data)}}; }
json options_json(const FitCommand& c) {
  return {{"data", data_json(c.data)},
          {"family", std::string(dist::family_name(c.family))},
          {"sigma_prior", c.sigma_prior},
          {"sampler", to_json(c.sampler)},
          {"max_divergence_rate", c.max_divergence_rate}};
}
json options_json(const CompareCommand& c) {
  return {{"data", data_json(c.data)},
          {"families", families_json(c.families)},
          {"sigma_prior", c.sigma_prior},
          {"sampler", to_json(c.sampler)},
          {"max_divergence_rate", c.max_divergence_rate}};
}
json options_json(const SensitivityCommand& c) {
  return {{"data", data_json(c.data)},
          {"families", families_json(c.families)},
          {"sigma_priors", c.sigma_priors},
          {"repeats", c.repeats},
          {"sampler", to_json(c.sampler)},
          {"max_divergence_rate", c.max_divergence_rate}};
}
json grid_json(const sim::SimGrid& g) {
  return {{"mu", g.mu},
          {"phis", g.phis},
          {"sigmas", g.sigmas},
          {"ns", g.ns},
          {"replications", g.replications},
          {"sampler", to_json(g.sampler)},
          {"seed", g.seed},
          {"data_family", error_family_json(g.data_family)},
          {"divergence_budget", g.divergence_budget}};
}
sim::SimGrid grid_from_json(const json& j) {
  sim::SimGrid g;
  g.mu = j.at("mu").get<double>();
  g.phis = j.at("phis").get<std::vector<double>>();
  g.sigmas = j.at("sigmas").get<std::vector<double>>();
  g.ns = j.at("ns").get<std::vector<std::size_t>>();
  g.replications = j.at("replications").get<std::size_t>();
  g.sampler = sampler_from_json(j.at("sampler"));
  g.seed = j.at("seed").get<std::uint64_t>();
  g.data_family = error_family_from_json(j.at("data_family"));
  g.divergence_budget = j.at("divergence_budget").get<double>();
  return g;
}
json options_json(const SimulateCommand& c) {
  return {{"grid", grid_json(c.grid)}, {"oracle", c.oracle}};
}
json options_json(const SynthCommand& c) {
  return {{"mu", c.mu},
          {"phi", c.phi},
          {"sigma", c.sigma},
          {"family", error_family_json(c.family)},
          {"n", c.n},
          {"seed", c.seed}};
}
json options_json(const PlotCommand& c) {
  return {{"data", data_json(c.data)}, {"report", c.report}};
}

double divergence_rate(const fit::FitResult& r) { return r.divergence_rate(); }

}  // namespace

// ---------------------------------------------------------------------------
// JSON views

json to_json(const dist::PriorConfig& p) {
  json nu = {{"kind", kind_label(p.nu.kind)}};
  if (p.nu.kind != dist::NuPrior::Kind::None) {
    nu["first"] = p.nu.first;
    nu["second"] = p.nu.second;
  }
  return {{"mu", {{"mean", p.mu.mean}, {"sd", p.mu.sd}}},
          {"phi", {{"a", p.phi.a}, {"b", p.phi.b}}},
          {"sigma2", {{"spec", p.sigma2.to_string()}, {"label", p.sigma2.label()}}},
          {"nu", nu}};
}

json to_json(const hmc::SamplerConfig& s) {
  return {{"warmup", s.warmup},
          {"draws", s.draws},
          {"chains", s.chains},
          {"target_accept", s.target_accept},
          {"max_tree_depth", s.max_tree_depth},
          {"seed", s.seed},
          {"mass_matrix", s.mass_matrix == hmc::MassMatrix::Diagonal ? "diagonal" : "unit"},
          {"adapt_step_size", s.adapt_step_size},
          {"initial_step", s.initial_step},
          {"max_energy_error", s.max_energy_error}};
}

hmc::SamplerConfig sampler_from_json(const json& j) {
  hmc::SamplerConfig s;
  s.warmup = j.at("warmup").get<std::size_t>();
  s.draws = j.at("draws").get<std::size_t>();
  s.chains = j.at("chains").get<std::size_t>();
  s.target_accept = j.at("target_accept").get<double>();
  s.max_tree_depth = j.at("max_tree_depth").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.mass_matrix = j.at("mass_matrix").get<std::string>() == "unit" ? hmc::MassMatrix::Unit
                                                                    : hmc::MassMatrix::Diagonal;
  s.adapt_step_size = j.at("adapt_step_size").get<bool>();
  s.initial_step = j.at("initial_step").get<double>();
  s.max_energy_error = j.at("max_energy_error").get<double>();
  return s;
}

json to_json(const modsel::CriteriaReport& r) {
  return {{"model", r.model},         {"n", r.n},
          {"dic", num(r.dic)},        {"p_dic", num(r.p_dic)},
          {"waic", num(r.waic)},      {"se_waic", num(r.se_waic)},
          {"p_waic", num(r.p_waic)},  {"loo", num(r.loo)},
          {"se_loo", num(r.se_loo)},  {"p_loo", num(r.p_loo)},
          {"k_warnings", r.k_warnings}, {"pareto_k", num_array(r.pareto_k)}};
}

json to_json(const modsel::Ranking& r) {
  auto table = [&](const std::vector<modsel::RankEntry>& entries) {
    json a = json::array();
    for (const auto& e : entries)
      a.push_back({{"model", r.models[e.model]},
                   {"rank", e.rank},
                   {"value", num(e.value)},
                   {"diff", num(e.diff)},
                   {"se_diff", opt_json(e.se_diff)}});
    return a;
  };
  return {{"dic", table(r.dic)}, {"waic", table(r.waic)}, {"loo", table(r.loo)}};
}

json to_json(const fit::FitResult& r) {
  json params = json::array();
  for (const auto& p : r.parameters)
    params.push_back({{"name", p.name},
                      {"mean", p.mean},
                      {"sd", p.sd},
                      {"q025", p.lower},
                      {"q975", p.upper},
                      {"rhat", opt_json(p.rhat)},
                      {"ess_bulk", opt_json(p.ess)}});
  json out = {{"family", std::string(dist::family_name(r.spec.family))},
              {"label", std::string(dist::family_label(r.spec.family))},
              {"priors", to_json(r.spec.priors)},
              {"parameters", params},
              {"diagnostics",
               {{"divergences", r.divergences},
                {"total_draws", r.total_draws},
                {"divergence_rate", r.divergence_rate()},
                {"mean_accept_stat", r.mean_accept},
                {"step_sizes", r.step_sizes}}}};
  if (r.criteria) out["criteria"] = to_json(*r.criteria);
  if (!r.volatility.mean.empty())
    out["volatility"] = {{"level", r.volatility.level},
                         {"mean", r.volatility.mean},
                         {"lower", r.volatility.lower},
                         {"upper", r.volatility.upper}};
  return out;
}

json to_json(const sim::SimReport& rep) {
  json cells = json::array();
  for (const auto& c : rep.cells) {
    json rows = json::array();
    for (const auto& r : c.rows)
      rows.push_back({{"parameter", r.parameter},
                      {"truth", r.truth},
                      {"bias", r.error.bias},
                      {"smse", r.error.smse},
                      {"estimates", r.estimates}});
    json reps = json::array();
    for (const auto& r : c.replications)
      reps.push_back({{"index", r.index},
                      {"seed", r.seed},
                      {"divergences", r.estimate.divergences},
                      {"total_draws", r.estimate.total_draws},
                      {"max_rhat", opt_json(r.estimate.max_rhat)},
                      {"min_ess", opt_json(r.estimate.min_ess)},
                      {"over_budget", r.over_budget}});
    cells.push_back({{"n", c.n},
                     {"phi", c.phi},
                     {"sigma_eta", c.sigma},
                     {"rows", rows},
                     {"divergence_rate", c.divergence_rate},
                     {"flagged", c.flagged},
                     {"min_ess", opt_json(c.min_ess)},
                     {"max_rhat", opt_json(c.max_rhat)},
                     {"replications", reps}});
  }
  json trend = json::array();
  for (const auto& t : sim::smse_trend(rep))
    trend.push_back({{"phi", t.phi}, {"sigma_eta", t.sigma}, {"improving", t.improving}, {"holds", t.holds}});
  return {{"cells", cells}, {"smse_trend", trend}, {"budget_breached", rep.budget_breached()}};
}

json to_json(const io::Description& d) {
  return {{"T", d.count}, {"mean", d.mean}, {"sd", d.sd}, {"skewness", d.skewness}, {"kurtosis", d.kurtosis}};
}

sim::Estimate oracle_estimator(const sim::EstimationTask& task) {
  sim::Estimate e;
  e.means = {task.mu, task.phi, task.sigma};
  e.total_draws = task.sampler.draws * task.sampler.chains;
  return e;
}

io::ReturnSeries load_series(const DataOptions& data) {
  if (data.path.empty()) throw std::invalid_argument("no input data (--data)");
  auto series = io::ingest(data.path, data.column, data.kind);
  if (data.demean) series = io::demean(std::move(series));
  return series;
}

// ---------------------------------------------------------------------------
// Commands

int describe(const DescribeCommand& cmd, std::ostream& log) {
  const auto series = load_series(cmd.data);
  const auto d = io::describe(series.values);
  const json m = manifest("describe", options_json(cmd), &series.values);
  log << "   T      Mean        SD  Skewness  Kurtosis\n"
      << pad(std::to_string(d.count), 4) << pad(fixed(d.mean, 5), 10) << pad(fixed(d.sd, 4), 10)
      << pad(fixed(d.skewness, 2), 10) << pad(fixed(d.kurtosis, 2), 10) << '\n';
  if (!cmd.out.empty()) {
    const auto dir = prepare_out(cmd.out);
    std::ostringstream csv;
    csv << "# " << manifest_comment(m) << "\nSeries,T,Mean,SD,Skewness,Kurtosis\n"
        << '"' << series.source << "\"," << d.count << ',' << shortest(d.mean) << ','
        << shortest(d.sd) << ',' << shortest(d.skewness) << ',' << shortest(d.kurtosis) << '\n';
    write_text(dir / "describe.csv", csv.str());
    write_json(dir / "describe.json",
               {{"schema_version", kSchemaVersion}, {"manifest", m}, {"statistics", to_json(d)}});
    write_json(dir / "manifest.json", m);
  }
  return kOk;
}

int returns(const ReturnsCommand& cmd, std::ostream& log) {
  const auto series = load_series(cmd.data);
  const json m = manifest("returns", options_json(cmd), &series.values);
  const auto dir = prepare_out(cmd.out);
  std::ostringstream csv;
  io::write_series_csv(csv, series, manifest_comment(m));
  write_text(dir / "returns.csv", csv.str());
  write_json(dir / "manifest.json", m);
  log << "wrote " << series.values.size() << " returns to " << (dir / "returns.csv").string() << '\n';
  return kOk;
}

int fit(const FitCommand& cmd, std::ostream& log) {
  const auto series = load_series(cmd.data);
  if (series.values.size() < 10)
    throw io::InputError("fit needs at least 10 returns, got " + std::to_string(series.values.size()));
  const auto spec = make_spec(cmd.family, cmd.sigma_prior);
  const auto res = fit::fit_sv(spec, series.values, cmd.sampler);
  const json m = manifest("fit", options_json(cmd), &series.values);
  const bool breached = res.divergence_rate() > cmd.max_divergence_rate;

  json report = to_json(res);
  report["schema_version"] = kSchemaVersion;
  report["manifest"] = m;
  report["divergence_budget"] = {{"max_rate", cmd.max_divergence_rate}, {"breached", breached}};

  const auto dir = prepare_out(cmd.out);
  write_json(dir / "fit.json", report);
  write_json(dir / "manifest.json", m);
  std::ostringstream params;
  params << "# " << manifest_comment(m) << "\nParameter,Mean,SD,Lower95,Upper95,Rhat,ESS\n";
  for (const auto& p : res.parameters)
    params << p.name << ',' << shortest(p.mean) << ',' << shortest(p.sd) << ',' << shortest(p.lower)
           << ',' << shortest(p.upper) << ',' << csv_opt(p.rhat) << ',' << csv_opt(p.ess) << '\n';
  write_text(dir / "parameters.csv", params.str());
  std::ostringstream vol;
  vol << "# " << manifest_comment(m) << "\nt,mean,lower,upper\n";
  for (std::size_t t = 0; t < res.volatility.mean.size(); ++t)
    vol << t + 1 << ',' << shortest(res.volatility.mean[t]) << ',' << shortest(res.volatility.lower[t])
        << ',' << shortest(res.volatility.upper[t]) << '\n';
  write_text(dir / "volatility.csv", vol.str());

  log << dist::family_label(cmd.family) << " SV fit, n=" << series.values.size() << "\n"
      << "parameter      mean        sd     2.5%    97.5%    rhat     ess\n";
  for (const auto& p : res.parameters)
    log << std::left << std::setw(9) << p.name << std::right << pad(fixed(p.mean, 4), 10)
        << pad(fixed(p.sd, 4), 10) << pad(fixed(p.lower, 4), 9) << pad(fixed(p.upper, 4), 9)
        << pad(p.rhat ? fixed(*p.rhat, 3) : "NA", 8) << pad(p.ess ? fixed(*p.ess, 0) : "NA", 8) << '\n';
  if (res.criteria)
    log << "DIC " << fixed(res.criteria->dic, 1) << "  WAIC " << fixed(res.criteria->waic, 1) << " ("
        << fixed(res.criteria->se_waic, 1) << ")  LOO " << fixed(res.criteria->loo, 1) << " ("
        << fixed(res.criteria->se_loo, 1) << ")\n";
  log << "divergences " << res.divergences << "/" << res.total_draws << '\n';
  if (breached) {
    log << "divergence rate " << fixed(100.0 * res.divergence_rate(), 2) << "% exceeds "
        << fixed(100.0 * cmd.max_divergence_rate, 2) << "%\n";
    return kDivergenceBudget;
  }
  return kOk;
}

namespace {

struct FamilyOutcome {
  dist::Family family;
  std::optional<modsel::CriteriaReport> report;
  double divergence_rate = 0.0;
  std::string error;
};

FamilyOutcome fit_family(dist::Family family, const std::string& sigma_prior,
                         const std::vector<double>& y, const hmc::SamplerConfig& sampler) {
  FamilyOutcome o{family, std::nullopt, 0.0, {}};
  try {
    fit::FitOptions opts;
    opts.volatility = false;
    const auto res = fit::fit_sv(make_spec(family, sigma_prior), y, sampler, opts);
    o.report = res.criteria;
    o.divergence_rate = divergence_rate(res);
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

// ",DIC,WAIC,SE_waic,LOO,SE_loo" for one outcome.
void criteria_csv_values(std::ostream& os, const FamilyOutcome& o) {
  if (o.report) {
    const auto& r = *o.report;
    os << ',' << shortest(r.dic) << ',' << shortest(r.waic) << ',' << shortest(r.se_waic) << ','
       << shortest(r.loo) << ',' << shortest(r.se_loo);
  } else {
    os << ",NA,NA,NA,NA,NA";
  }
}

}  // namespace

int compare(const CompareCommand& cmd, std::ostream& log) {
  if (cmd.families.size() < 2) throw std::invalid_argument("compare needs at least two families");
  const auto series = load_series(cmd.data);
  if (series.values.size() < 10)
    throw io::InputError("compare needs at least 10 returns, got " + std::to_string(series.values.size()));
  const json m = manifest("compare", options_json(cmd), &series.values);

  std::vector<FamilyOutcome> outcomes;
  for (auto f : cmd.families) outcomes.push_back(fit_family(f, cmd.sigma_prior, series.values, cmd.sampler));

  std::vector<modsel::CriteriaReport> ok;
  bool breached = false;
  std::size_t failures = 0;
  json rows = json::array();
  for (const auto& o : outcomes) {
    json row = {{"family", std::string(dist::family_name(o.family))},
                {"label", std::string(dist::family_label(o.family))}};
    if (o.report) {
      ok.push_back(*o.report);
      row["criteria"] = to_json(*o.report);
      row["divergence_rate"] = o.divergence_rate;
      breached = breached || o.divergence_rate > cmd.max_divergence_rate;
    } else {
      row["error"] = o.error;
      ++failures;
    }
    rows.push_back(row);
  }
  if (ok.empty()) {
    for (const auto& o : outcomes) log << dist::family_label(o.family) << ": " << o.error << '\n';
    throw std::runtime_error("compare: every fit failed");
  }
  const auto ranking = modsel::compare(ok);

  const auto dir = prepare_out(cmd.out);
  write_json(dir / "compare.json", {{"schema_version", kSchemaVersion},
                                     {"manifest", m},
                                     {"models", rows},
                                     {"ranking", to_json(ranking)}});
  write_json(dir / "manifest.json", m);
  std::ostringstream csv;
  csv << "# " << manifest_comment(m) << "\nDist,DIC,WAIC,SE_waic,LOO,SE_loo\n";
  for (const auto& o : outcomes) {
    csv << dist::family_label(o.family);
    criteria_csv_values(csv, o);
    csv << '\n';
  }
  write_text(dir / "compare.csv", csv.str());

  log << "Dist              DIC      WAIC   SE_waic       LOO    SE_loo\n";
  for (const auto& o : outcomes) {
    log << std::left << std::setw(12) << dist::family_label(o.family) << std::right;
    if (o.report)
      log << pad(fixed(o.report->dic, 1), 10) << pad(fixed(o.report->waic, 1), 10)
          << pad(fixed(o.report->se_waic, 1), 10) << pad(fixed(o.report->loo, 1), 10)
          << pad(fixed(o.report->se_loo, 1), 10) << '\n';
    else
      log << "  failed: " << o.error << '\n';
  }
  if (breached) return kDivergenceBudget;
  return failures > 0 ? kPartialFailure : kOk;
}

int sensitivity(const SensitivityCommand& cmd, std::ostream& log) {
  if (cmd.families.empty() || cmd.sigma_priors.empty() || cmd.repeats == 0)
    throw std::invalid_argument("sensitivity needs families, sigma priors and repeats >= 1");
  const auto series = load_series(cmd.data);
  if (series.values.size() < 10)
    throw io::InputError("sensitivity needs at least 10 returns, got " +
                         std::to_string(series.values.size()));
  for (const auto& p : cmd.sigma_priors) (void)dist::SigmaPrior::parse(p);
  const json m = manifest("sensitivity", options_json(cmd), &series.values);

  // outcomes[p][r][f]
  std::vector<std::vector<std::vector<FamilyOutcome>>> outcomes(cmd.sigma_priors.size());
  for (std::size_t p = 0; p < cmd.sigma_priors.size(); ++p) {
    outcomes[p].resize(cmd.repeats);
    for (std::size_t r = 0; r < cmd.repeats; ++r)
      for (std::size_t f = 0; f < cmd.families.size(); ++f) {
        hmc::SamplerConfig s = cmd.sampler;
        s.seed = derive_seed(cmd.sampler.seed, r, f);
        outcomes[p][r].push_back(fit_family(cmd.families[f], cmd.sigma_priors[p], series.values, s));
      }
  }

  std::size_t failures = 0, total = 0;
  bool breached = false;
  json rows = json::array();
  std::ostringstream csv;
  csv << "# " << manifest_comment(m) << "\nPrior,Dist,Repeat,DIC,WAIC,EP_waic,LOO,EP_loo\n";
  for (std::size_t p = 0; p < outcomes.size(); ++p) {
    const auto label = dist::SigmaPrior::parse(cmd.sigma_priors[p]).label();
    for (std::size_t r = 0; r < cmd.repeats; ++r)
      for (const auto& o : outcomes[p][r]) {
        ++total;
        json row = {{"prior", cmd.sigma_priors[p]},
                    {"prior_label", label},
                    {"family", std::string(dist::family_name(o.family))},
                    {"repeat", r + 1}};
        if (o.report) {
          row["criteria"] = to_json(*o.report);
          row["divergence_rate"] = o.divergence_rate;
          breached = breached || o.divergence_rate > cmd.max_divergence_rate;
        } else {
          row["error"] = o.error;
          ++failures;
        }
        rows.push_back(row);
        csv << '"' << label << "\"," << dist::family_label(o.family) << ',' << r + 1;
        criteria_csv_values(csv, o);
        csv << '\n';
      }
  }
  if (failures == total) throw std::runtime_error("sensitivity: every fit failed");

  // Rank stability: per repeat and criterion, is the family order the same under every prior?
  json stability = json::array();
  bool all_stable = true;
  log << "Rank stability across sigma_eta^2 priors\n";
  for (std::size_t r = 0; r < cmd.repeats; ++r) {
    for (const char* criterion : {"dic", "waic", "loo"}) {
      json per_prior = json::array();
      std::optional<std::vector<std::string>> first;
      bool stable = true;
      for (std::size_t p = 0; p < outcomes.size(); ++p) {
        std::vector<modsel::CriteriaReport> ok;
        for (const auto& o : outcomes[p][r])
          if (o.report) ok.push_back(*o.report);
        std::vector<std::string> order;
        if (ok.size() == cmd.families.size()) {
          const auto ranking = modsel::compare(ok);
          const auto& entries = std::string(criterion) == "dic"    ? ranking.dic
                                : std::string(criterion) == "waic" ? ranking.waic
                                                                   : ranking.loo;
          for (const auto& e : entries) order.push_back(ranking.models[e.model]);
        }
        if (order.empty()) stable = false;
        if (!first) first = order;
        else if (order != *first) stable = false;
        per_prior.push_back({{"prior", cmd.sigma_priors[p]}, {"order", order}});
      }
      all_stable = all_stable && stable;
      stability.push_back({{"repeat", r + 1}, {"criterion", criterion}, {"stable", stable},
                           {"rankings", per_prior}});
      log << "  repeat " << r + 1 << ' ' << std::left << std::setw(5) << criterion << std::right
          << (stable ? "stable" : "changed") << '\n';
    }
  }

  const auto dir = prepare_out(cmd.out);
  write_json(dir / "sensitivity.json", {{"schema_version", kSchemaVersion},
                                         {"manifest", m},
                                         {"rows", rows},
                                         {"rank_stability", stability},
                                         {"all_stable", all_stable}});
  write_json(dir / "manifest.json", m);
  write_text(dir / "sensitivity.csv", csv.str());
  if (breached) return kDivergenceBudget;
  return failures > 0 ? kPartialFailure : kOk;
}

int simulate(const SimulateCommand& cmd, std::ostream& log) {
  const auto spec = model::ModelSpec::defaults(dist::Family::Gaussian);
  const auto report = cmd.oracle ? sim::run_study(cmd.grid, spec, oracle_estimator)
                                 : sim::run_study(cmd.grid, spec);
  const json m = manifest("simulate", options_json(cmd), nullptr);
  const auto dir = prepare_out(cmd.out);
  std::ostringstream csv;
  csv << "# " << manifest_comment(m) << '\n';
  report.write_csv(csv);
  write_text(dir / "simstudy.csv", csv.str());
  json j = to_json(report);
  j["schema_version"] = kSchemaVersion;
  j["manifest"] = m;
  write_json(dir / "simstudy.json", j);
  write_json(dir / "manifest.json", m);

  log << "   n    phi  sigma  param      bias      smse   min_ess  max_rhat  div%\n";
  for (const auto& c : report.cells)
    for (const auto& r : c.rows)
      log << pad(std::to_string(c.n), 4) << pad(fixed(c.phi, 2), 7) << pad(fixed(c.sigma, 2), 7) << "  "
          << std::left << std::setw(6) << r.parameter << std::right << pad(fixed(r.error.bias, 4), 9)
          << pad(fixed(r.error.smse, 4), 10) << pad(c.min_ess ? fixed(*c.min_ess, 0) : "NA", 10)
          << pad(c.max_rhat ? fixed(*c.max_rhat, 3) : "NA", 10)
          << pad(fixed(100.0 * c.divergence_rate, 2), 6) << '\n';
  for (const auto& t : sim::smse_trend(report))
    log << "smse non-increasing in n for " << t.improving << "/3 parameters at phi=" << fixed(t.phi, 2)
        << " sigma=" << fixed(t.sigma, 2) << '\n';
  if (report.budget_breached()) {
    log << "some replications exceeded the " << fixed(100.0 * cmd.grid.divergence_budget, 1)
        << "% divergence budget\n";
    return kDivergenceBudget;
  }
  return kOk;
}

int synth(const SynthCommand& cmd, std::ostream& log) {
  if (cmd.out.empty()) throw std::invalid_argument("synth needs an output file (--out)");
  Rng rng = make_stream(cmd.seed, 0);
  const auto s = sim::simulate_sv(cmd.mu, cmd.phi, cmd.sigma, cmd.family, cmd.n, rng);
  const json m = manifest("synth", options_json(cmd), &s.y);
  const fs::path path(cmd.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream csv;
  csv << "# " << manifest_comment(m) << "\nt,return,h\n";
  for (std::size_t t = 0; t < s.y.size(); ++t)
    csv << t + 1 << ',' << shortest(s.y[t]) << ',' << shortest(s.h[t]) << '\n';
  write_text(path, csv.str());
  log << "wrote " << s.y.size() << " simulated returns to " << path.string() << '\n';
  return kOk;
}

int plot(const PlotCommand& cmd, std::ostream& log) {
  if (cmd.data.path.empty() && cmd.report.empty())
    throw std::invalid_argument("plot needs --data or --report");
  const auto dir = prepare_out(cmd.out);
  if (!cmd.data.path.empty()) {
    const auto series = load_series(cmd.data);
    const json m = manifest("plot", options_json(cmd), &series.values);
    write_text(dir / "returns.svg",
               plot::returns_svg(series.values, "Returns: " + series.source, m.dump()));
    write_json(dir / "manifest.json", m);
    log << "wrote " << (dir / "returns.svg").string() << '\n';
  }
  if (!cmd.report.empty()) {
    std::ifstream in(cmd.report);
    if (!in) throw io::InputError("cannot open " + cmd.report);
    const json report = json::parse(in);
    if (!report.contains("volatility")) throw io::InputError(cmd.report + " has no volatility summary");
    const auto& v = report["volatility"];
    const auto mean = v.at("mean").get<std::vector<double>>();
    const auto lower = v.at("lower").get<std::vector<double>>();
    const auto upper = v.at("upper").get<std::vector<double>>();
    const std::string title = "Posterior volatility exp(h/2), " + report.value("label", std::string()) +
                              " errors, " + fixed(100.0 * v.value("level", 0.9), 0) + "% band";
    write_text(dir / "volatility.svg",
               plot::volatility_svg(mean, lower, upper, {}, title, report.at("manifest").dump()));
    log << "wrote " << (dir / "volatility.svg").string() << '\n';
  }
  return kOk;
}

int rerun(const std::string& manifest_path, const std::string& out, std::ostream& log) {
  std::ifstream in(manifest_path);
  if (!in) throw io::InputError("cannot open " + manifest_path);
  const json m = json::parse(in);
  if (m.value("schema_version", 0) != kSchemaVersion)
    throw io::SchemaError("unsupported manifest schema version");
  const std::string dir = out.empty() ? fs::path(manifest_path).parent_path().string() : out;
  const std::string command = m.at("command").get<std::string>();
  const json& o = m.at("options");

  auto check_data = [&](const DataOptions& d) { check_fingerprint(m, load_series(d).values); };

  if (command == "describe") {
    DescribeCommand c{data_from_json(o.at("data")), dir};
    check_data(c.data);
    return describe(c, log);
  }
  if (command == "returns") {
    ReturnsCommand c{data_from_json(o.at("data")), dir};
    check_data(c.data);
    return returns(c, log);
  }
  if (command == "fit") {
    FitCommand c;
    c.data = data_from_json(o.at("data"));
    c.family = dist::parse_family(o.at("family").get<std::string>());
    c.sigma_prior = o.at("sigma_prior").get<std::string>();
    c.sampler = sampler_from_json(o.at("sampler"));
    c.max_divergence_rate = o.at("max_divergence_rate").get<double>();
    c.out = dir;
    check_data(c.data);
    return fit(c, log);
  }
  if (command == "compare") {
    CompareCommand c;
    c.data = data_from_json(o.at("data"));
    c.families = families_from_json(o.at("families"));
    c.sigma_prior = o.at("sigma_prior").get<std::string>();
    c.sampler = sampler_from_json(o.at("sampler"));
    c.max_divergence_rate = o.at("max_divergence_rate").get<double>();
    c.out = dir;
    check_data(c.data);
    return compare(c, log);
  }
  if (command == "sensitivity") {
    SensitivityCommand c;
    c.data = data_from_json(o.at("data"));
    c.families = families_from_json(o.at("families"));
    c.sigma_priors = o.at("sigma_priors").get<std::vector<std::string>>();
    c.repeats = o.at("repeats").get<std::size_t>();
    c.sampler = sampler_from_json(o.at("sampler"));
    c.max_divergence_rate = o.at("max_divergence_rate").get<double>();
    c.out = dir;
    check_data(c.data);
    return sensitivity(c, log);
  }
  if (command == "simulate") {
    SimulateCommand c;
    c.grid = grid_from_json(o.at("grid"));
    c.oracle = o.at("oracle").get<bool>();
    c.out = dir;
    return simulate(c, log);
  }
  if (command == "plot") {
    PlotCommand c;
    c.data = data_from_json(o.at("data"));
    c.report = o.at("report").get<std::string>();
    c.out = dir;
    if (!c.data.path.empty()) check_data(c.data);
    return plot(c, log);
  }
  throw io::SchemaError("manifest command '" + command + "' cannot be rerun");
}

}  // namespace svhmc::app
