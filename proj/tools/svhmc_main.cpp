#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "svhmc/app.hpp"

namespace {

using namespace svhmc;

void add_data_flags(CLI::App* cmd, app::DataOptions& data, bool demean_flag) {
  cmd->add_option("--data", data.path, "CSV file with a header row")->required();
  cmd->add_option("--column", data.column, "column name or 1-based index");
  cmd->add_option_function<std::string>(
         "--kind", [&data](const std::string& k) { data.kind = io::parse_kind(k); },
         "prices|returns (default returns)")
      ->check(CLI::IsMember({"prices", "returns"}));
  if (demean_flag)
    cmd->add_flag("--demean,!--no-demean", data.demean, "subtract the sample mean (default on)");
}

void add_sampler_flags(CLI::App* cmd, hmc::SamplerConfig& s) {
  cmd->add_option("--warmup", s.warmup, "warmup iterations per chain")->capture_default_str();
  cmd->add_option("--draws", s.draws, "retained draws per chain")->capture_default_str();
  cmd->add_option("--chains", s.chains, "number of chains")->capture_default_str();
  cmd->add_option("--seed", s.seed, "master seed")->capture_default_str();
  cmd->add_option("--target-accept", s.target_accept)->capture_default_str();
  cmd->add_option("--max-depth", s.max_tree_depth)->capture_default_str();
  cmd->add_option("--threads", s.threads, "worker threads for chains (0 = all cores)");
}

std::vector<dist::Family> parse_families(const std::vector<std::string>& names) {
  std::vector<dist::Family> out;
  for (const auto& n : names) out.push_back(dist::parse_family(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Bayesian stochastic-volatility toolkit: NUTS fits, DIC/WAIC/PSIS-LOO comparison, simulation studies"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", std::string(app::toolkit_version()));

  app::DescribeCommand describe;
  auto* c_describe = cli.add_subcommand("describe", "descriptive statistics of a return series");
  add_data_flags(c_describe, describe.data, false);
  c_describe->add_option("--out", describe.out, "output directory");

  app::ReturnsCommand returns;
  auto* c_returns = cli.add_subcommand("returns", "convert prices to percent log-returns");
  add_data_flags(c_returns, returns.data, true);
  returns.data.demean = false;
  c_returns->add_option("--out", returns.out, "output directory")->required();

  app::FitCommand fit;
  std::string fit_family = "gaussian";
  auto* c_fit = cli.add_subcommand("fit", "fit one SV model");
  add_data_flags(c_fit, fit.data, true);
  c_fit->add_option("--family", fit_family, "gaussian|ged|student-t|skew-normal")->capture_default_str();
  c_fit->add_option("--sigma-prior", fit.sigma_prior, "gamma:B | invgamma:a,b | invchisq:c,s")
      ->capture_default_str();
  add_sampler_flags(c_fit, fit.sampler);
  c_fit->add_option("--max-divergence-rate", fit.max_divergence_rate)->capture_default_str();
  c_fit->add_option("--out", fit.out, "output directory")->required();

  app::CompareCommand compare;
  std::vector<std::string> compare_families{"gaussian", "student-t", "ged", "skew-normal"};
  auto* c_compare = cli.add_subcommand("compare", "fit several error families and rank them");
  add_data_flags(c_compare, compare.data, true);
  c_compare->add_option("--family", compare_families, "families to compare (repeatable)")
      ->delimiter(',');
  c_compare->add_option("--sigma-prior", compare.sigma_prior)->capture_default_str();
  add_sampler_flags(c_compare, compare.sampler);
  c_compare->add_option("--max-divergence-rate", compare.max_divergence_rate)->capture_default_str();
  c_compare->add_option("--out", compare.out, "output directory")->required();

  app::SensitivityCommand sens;
  std::vector<std::string> sens_families{"gaussian", "student-t", "ged", "skew-normal"};
  auto* c_sens = cli.add_subcommand("sensitivity", "family ranking under alternative sigma_eta^2 priors");
  add_data_flags(c_sens, sens.data, true);
  c_sens->add_option("--family", sens_families)->delimiter(',');
  c_sens->add_option("--sigma-prior", sens.sigma_priors, "priors to cross (repeatable)");
  c_sens->add_option("--repeats", sens.repeats)->capture_default_str();
  add_sampler_flags(c_sens, sens.sampler);
  c_sens->add_option("--max-divergence-rate", sens.max_divergence_rate)->capture_default_str();
  c_sens->add_option("--out", sens.out, "output directory")->required();

  app::SimulateCommand simulate;
  bool full = false;
  std::size_t sim_reps = 0, sim_warmup = 0, sim_draws = 0, sim_chains = 0;
  std::size_t sim_workers = 0;
  auto* c_sim = cli.add_subcommand("simulate", "bias/smse simulation study");
  c_sim->add_flag("--full", full, "m=100 replications with 5,000 warmup + 5,000 draws");
  c_sim->add_option("--mu", simulate.grid.mu)->capture_default_str();
  c_sim->add_option("--phi", simulate.grid.phis, "persistence values")->delimiter(',');
  c_sim->add_option("--sigma-eta", simulate.grid.sigmas, "sigma_eta values")->delimiter(',');
  c_sim->add_option("--n", simulate.grid.ns, "series lengths")->delimiter(',');
  c_sim->add_option("--replications", sim_reps, "override m");
  c_sim->add_option("--warmup", sim_warmup);
  c_sim->add_option("--draws", sim_draws);
  c_sim->add_option("--chains", sim_chains);
  c_sim->add_option("--seed", simulate.grid.seed)->capture_default_str();
  c_sim->add_option("--workers", sim_workers, "concurrent replications (0 = all cores)");
  c_sim->add_option("--divergence-budget", simulate.grid.divergence_budget)->capture_default_str();
  c_sim->add_flag("--oracle", simulate.oracle, "replace the sampler by the generating values");
  c_sim->add_option("--out", simulate.out, "output directory")->required();

  app::SynthCommand synth;
  std::string synth_family = "gaussian";
  double synth_nu = 0.0;
  auto* c_synth = cli.add_subcommand("synth", "write one simulated SV return series");
  c_synth->add_option("--mu", synth.mu)->capture_default_str();
  c_synth->add_option("--phi", synth.phi)->capture_default_str();
  c_synth->add_option("--sigma-eta", synth.sigma)->capture_default_str();
  c_synth->add_option("--family", synth_family)->capture_default_str();
  c_synth->add_option("--nu", synth_nu, "shape of the error family");
  c_synth->add_option("--n", synth.n)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--out", synth.out, "output CSV file")->required();

  app::PlotCommand plot;
  auto* c_plot = cli.add_subcommand("plot", "SVG return trace and/or posterior volatility band");
  c_plot->add_option("--data", plot.data.path, "return CSV for the trace");
  c_plot->add_option("--column", plot.data.column);
  c_plot->add_option_function<std::string>(
      "--kind", [&plot](const std::string& k) { plot.data.kind = io::parse_kind(k); });
  c_plot->add_option("--report", plot.report, "fit.json with a volatility summary");
  c_plot->add_option("--out", plot.out, "output directory")->required();

  std::string manifest_path, rerun_out;
  auto* c_rerun = cli.add_subcommand("rerun", "reproduce every output of a run from its manifest.json");
  c_rerun->add_option("manifest", manifest_path)->required()->check(CLI::ExistingFile);
  c_rerun->add_option("--out", rerun_out, "output directory (default: the manifest's)");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*c_describe) return app::describe(describe, std::cout);
    if (*c_returns) return app::returns(returns, std::cout);
    if (*c_fit) {
      fit.family = dist::parse_family(fit_family);
      return app::fit(fit, std::cout);
    }
    if (*c_compare) {
      compare.families = parse_families(compare_families);
      return app::compare(compare, std::cout);
    }
    if (*c_sens) {
      sens.families = parse_families(sens_families);
      return app::sensitivity(sens, std::cout);
    }
    if (*c_sim) {
      auto& g = simulate.grid;
      if (full) {
        const auto f = sim::SimGrid::full();
        g.replications = f.replications;
        g.sampler.warmup = f.sampler.warmup;
        g.sampler.draws = f.sampler.draws;
      }
      if (sim_reps) g.replications = sim_reps;
      if (sim_warmup) g.sampler.warmup = sim_warmup;
      if (sim_draws) g.sampler.draws = sim_draws;
      if (sim_chains) g.sampler.chains = sim_chains;
      g.workers = sim_workers;
      return app::simulate(simulate, std::cout);
    }
    if (*c_synth) {
      synth.family = {dist::parse_family(synth_family), synth_nu};
      return app::synth(synth, std::cout);
    }
    if (*c_plot) return app::plot(plot, std::cout);
    if (*c_rerun) return app::rerun(manifest_path, rerun_out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return app::kError;
  }
  return app::kError;
}
