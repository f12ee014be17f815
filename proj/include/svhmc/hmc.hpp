#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svhmc/rng.hpp"
#include "svhmc/target.hpp"

namespace svhmc::hmc {

enum class MassMatrix { Unit, Diagonal };

struct SamplerConfig {
  std::size_t warmup = 5000;
  std::size_t draws = 5000;
  std::size_t chains = 2;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  MassMatrix mass_matrix = MassMatrix::Diagonal;
  /// When false the step size stays at initial_step for the whole run.
  bool adapt_step_size = true;
  double initial_step = 1.0;
  /// Energy error (nats) beyond which a trajectory is declared divergent.
  double max_energy_error = 1000.0;
  /// Worker threads for chains; 0 means one per hardware thread.
  std::size_t threads = 0;

  bool adapting() const { return adapt_step_size || mass_matrix == MassMatrix::Diagonal; }
  /// Throws std::invalid_argument on draws == 0, warmup < 100 with adaptation,
  /// target_accept outside (0, 1), or max_tree_depth < 1.
  void validate() const;
};

/// Position, momentum and the cached log density / gradient at the position.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double log_density = 0.0;
};

/// Half-kick / drift / half-kick with a diagonal inverse metric (empty span
/// means unit metric). Returns false when the new log density or gradient is
/// not finite.
bool leapfrog(const Target& target, PhasePoint& z, double step,
              std::span<const double> inv_metric = {});

/// Fills log_density and grad for z.q.
void refresh(const Target& target, PhasePoint& z);

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric);

struct Transition {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
};

/// Multinomial NUTS with the generalized no-U-turn criterion, including the
/// checks across merged subtrees.
class NutsSampler {
 public:
  NutsSampler(const Target& target, int max_tree_depth, double max_energy_error);

  /// One transition from z (which must carry a fresh log density / gradient).
  /// On return z holds the selected state.
  Transition transition(PhasePoint& z, double step, std::span<const double> inv_metric, Rng& rng);

 private:
  struct TreeState;
  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho,
                  std::vector<double>& p_beg, std::vector<double>& p_end, double h0, double sign,
                  TreeState& ts, double& log_sum_weight, Rng& rng);

  const Target& target_;
  int max_depth_;
  double max_energy_error_;
};

/// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target_accept, double gamma = 0.05, double t0 = 10.0,
                           double kappa = 0.75);

  void restart(double step);
  /// Returns the next step size to use.
  double learn(double accept_stat);
  /// Averaged iterate; the step size used after warmup.
  double final_step() const;

 private:
  double delta_, gamma_, t0_, kappa_;
  double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  double counter_ = 0.0;
};

/// Expanding-window schedule for the diagonal metric: an initial fast buffer,
/// slow windows doubling from base_window, and a terminal fast buffer.
class WindowSchedule {
 public:
  WindowSchedule(std::size_t warmup, std::size_t init_buffer = 75, std::size_t term_buffer = 50,
                 std::size_t base_window = 25);

  /// True when iteration `iter` (0-based) contributes to the variance estimate.
  bool in_window(std::size_t iter) const;
  /// True when a slow window closes after iteration `iter`.
  bool window_end(std::size_t iter) const;
  const std::vector<std::size_t>& window_ends() const { return ends_; }

 private:
  std::size_t warmup_, init_buffer_, term_buffer_;
  std::vector<std::size_t> ends_;
};

/// Heuristic initial step: double or halve until a single leapfrog step's
/// acceptance probability crosses 0.5. Throws std::runtime_error when no
/// finite step is found.
double find_initial_step(const Target& target, const PhasePoint& z, double step,
                         std::span<const double> inv_metric, Rng& rng);

struct WarmupResult {
  double step = 1.0;
  std::vector<double> inv_metric;
  PhasePoint state;
  std::vector<double> step_trace;
  std::vector<double> accept_stats;
  std::size_t divergences = 0;
};

/// Runs `config.warmup` adaptive iterations from `init`.
WarmupResult adapt(const Target& target, const SamplerConfig& config, std::vector<double> init,
                   Rng& rng);

struct ChainDraws {
  std::size_t dim = 0;
  std::vector<double> values;  // draws x dim, row-major, unconstrained
  std::vector<double> accept_stat;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<std::uint8_t> divergent;
  std::vector<double> energy;
  std::vector<double> step_trace;  // warmup followed by sampling iterations
  std::vector<double> inv_metric;
  double step = 0.0;
  std::size_t warmup_divergences = 0;

  std::size_t num_draws() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> draw(std::size_t s) const { return {values.data() + s * dim, dim}; }
  std::vector<double> coordinate(std::size_t j) const;
  std::size_t divergences() const;
};

struct DrawStore {
  std::size_t dim = 0;
  std::vector<ChainDraws> chains;

  std::size_t num_chains() const { return chains.size(); }
  std::size_t total_draws() const;
  std::size_t divergences() const;
  double divergence_rate() const;
  double mean_accept_stat() const;
  /// One vector per chain with the draws of coordinate j.
  std::vector<std::vector<double>> coordinate(std::size_t j) const;
};

/// Runs `config.chains` independent chains (in parallel) with streams derived
/// from config.seed. Chain starts come from target.initial_point unless
/// `inits` supplies one vector per chain. Same seed and target give
/// bit-identical draws.
DrawStore run(const Target& target, const SamplerConfig& config,
              std::vector<std::vector<double>> inits = {});

}  // namespace svhmc::hmc
