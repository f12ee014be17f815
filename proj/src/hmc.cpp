#include "svhmc/hmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace svhmc::hmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void sharpen(std::span<const double> p, std::span<const double> inv_metric,
             std::vector<double>& out) {
  out.resize(p.size());
  if (inv_metric.empty()) {
    std::copy(p.begin(), p.end(), out.begin());
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = inv_metric[i] * p[i];
  }
}

void sample_momentum(PhasePoint& z, std::span<const double> inv_metric, Rng& rng) {
  z.p.resize(z.q.size());
  for (std::size_t i = 0; i < z.p.size(); ++i) {
    const double u = std_normal(rng);
    z.p[i] = inv_metric.empty() ? u : u / std::sqrt(inv_metric[i]);
  }
}

bool finite_state(const PhasePoint& z) {
  if (!std::isfinite(z.log_density)) return false;
  return std::all_of(z.grad.begin(), z.grad.end(), [](double g) { return std::isfinite(g); });
}

// No-U-turn check on the span between two ends with summed momentum rho.
bool no_u_turn(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
               const std::vector<double>& rho) {
  return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
}

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

class Welford {
 public:
  explicit Welford(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}
  void add(std::span<const double> x) {
    ++n_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }
  std::size_t count() const { return n_; }
  std::vector<double> variance() const {
    std::vector<double> v(m2_.size(), 0.0);
    if (n_ > 1)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / static_cast<double>(n_ - 1);
    return v;
  }
  void reset() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

}  // namespace

std::vector<double> Target::initial_point(Rng& rng) const {
  std::vector<double> q(dim());
  for (double& v : q) v = 4.0 * uniform01(rng) - 2.0;
  return q;
}

void SamplerConfig::validate() const {
  if (draws == 0) throw std::invalid_argument("sampler config: draws must be at least 1");
  if (chains == 0) throw std::invalid_argument("sampler config: chains must be at least 1");
  if (adapting() && warmup < 100)
    throw std::invalid_argument("sampler config: warmup must be >= 100 when adaptation is enabled");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("sampler config: target_accept must lie in (0, 1)");
  if (max_tree_depth < 1) throw std::invalid_argument("sampler config: max_tree_depth must be >= 1");
  if (!(initial_step > 0.0)) throw std::invalid_argument("sampler config: initial_step must be > 0");
}

void refresh(const Target& target, PhasePoint& z) {
  z.grad.resize(z.q.size());
  z.log_density = target.log_density_gradient(z.q, z.grad);
}

bool leapfrog(const Target& target, PhasePoint& z, double step,
              std::span<const double> inv_metric) {
  const std::size_t d = z.q.size();
  for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * step * z.grad[i];
  if (inv_metric.empty()) {
    for (std::size_t i = 0; i < d; ++i) z.q[i] += step * z.p[i];
  } else {
    for (std::size_t i = 0; i < d; ++i) z.q[i] += step * inv_metric[i] * z.p[i];
  }
  refresh(target, z);
  if (!finite_state(z)) return false;
  for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * step * z.grad[i];
  return true;
}

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  double kinetic = 0.0;
  for (std::size_t i = 0; i < z.p.size(); ++i)
    kinetic += (inv_metric.empty() ? 1.0 : inv_metric[i]) * z.p[i] * z.p[i];
  return -z.log_density + 0.5 * kinetic;
}

// ---------------------------------------------------------------------------
// NUTS

struct NutsSampler::TreeState {
  double h0 = 0.0;
  double step = 0.0;
  std::span<const double> inv_metric;
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;
};

NutsSampler::NutsSampler(const Target& target, int max_tree_depth, double max_energy_error)
    : target_(target), max_depth_(max_tree_depth), max_energy_error_(max_energy_error) {}

bool NutsSampler::build_tree(int depth, PhasePoint& z, PhasePoint& z_propose,
                             std::vector<double>& p_sharp_beg, std::vector<double>& p_sharp_end,
                             std::vector<double>& rho, std::vector<double>& p_beg,
                             std::vector<double>& p_end, double h0, double sign, TreeState& ts,
                             double& log_sum_weight, Rng& rng) {
  if (depth == 0) {
    const bool ok = leapfrog(target_, z, sign * ts.step, ts.inv_metric);
    ++ts.n_leapfrog;
    double h = ok ? hamiltonian(z, ts.inv_metric) : kInf;
    if (std::isnan(h)) h = kInf;
    if (h - h0 > max_energy_error_) ts.divergent = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    ts.sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
    z_propose = z;
    sharpen(z.p, ts.inv_metric, p_sharp_beg);
    p_sharp_end = p_sharp_beg;
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += z.p[i];
    p_beg = z.p;
    p_end = p_beg;
    return !ts.divergent;
  }

  const std::size_t d = z.q.size();

  // Left subtree.
  double log_sum_weight_init = -kInf;
  std::vector<double> p_init_end(d), p_sharp_init_end(d), rho_init(d, 0.0);
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                  p_init_end, h0, sign, ts, log_sum_weight_init, rng))
    return false;

  // Right subtree.
  PhasePoint z_propose_final = z;
  double log_sum_weight_final = -kInf;
  std::vector<double> p_final_beg(d), p_sharp_final_beg(d), rho_final(d, 0.0);
  if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                  p_final_beg, p_end, h0, sign, ts, log_sum_weight_final, rng))
    return false;

  // Multinomial sample between the two halves.
  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = std::move(z_propose_final);
  } else {
    const double accept_prob = std::exp(log_sum_weight_final - log_sum_weight_subtree);
    if (uniform01(rng) < accept_prob) z_propose = std::move(z_propose_final);
  }

  const auto rho_subtree = add(rho_init, rho_final);
  for (std::size_t i = 0; i < d; ++i) rho[i] += rho_subtree[i];

  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, add(rho_init, p_final_beg));
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, add(rho_final, p_init_end));
  return persist;
}

Transition NutsSampler::transition(PhasePoint& z, double step, std::span<const double> inv_metric,
                                   Rng& rng) {
  const std::size_t d = z.q.size();
  sample_momentum(z, inv_metric, rng);

  TreeState ts;
  ts.step = step;
  ts.inv_metric = inv_metric;
  ts.h0 = hamiltonian(z, inv_metric);
  const double h0 = ts.h0;

  PhasePoint z_fwd = z, z_bck = z;
  PhasePoint z_sample = z, z_propose = z;

  std::vector<double> p_sharp;
  sharpen(z.p, inv_metric, p_sharp);
  std::vector<double> p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp;
  std::vector<double> p_fwd_bck = z.p, p_sharp_fwd_bck = p_sharp;
  std::vector<double> p_bck_fwd = z.p, p_sharp_bck_fwd = p_sharp;
  std::vector<double> p_bck_bck = z.p, p_sharp_bck_bck = p_sharp;
  std::vector<double> rho = z.p;

  double log_sum_weight = 0.0;
  int depth = 0;
  while (depth < max_depth_) {
    std::vector<double> rho_fwd(d, 0.0), rho_bck(d, 0.0);
    double log_sum_weight_subtree = -kInf;
    bool valid = false;
    if (uniform01(rng) > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid = build_tree(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                         p_fwd_bck, p_fwd_fwd, h0, 1.0, ts, log_sum_weight_subtree, rng);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid = build_tree(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                         p_bck_fwd, p_bck_bck, h0, -1.0, ts, log_sum_weight_subtree, rng);
    }
    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (uniform01(rng) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = add(rho_bck, rho_fwd);
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, add(rho_bck, p_fwd_bck));
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, add(rho_fwd, p_bck_fwd));
    if (!persist) break;
  }

  Transition t;
  t.tree_depth = depth;
  t.n_leapfrog = ts.n_leapfrog;
  t.divergent = ts.divergent;
  t.accept_stat = ts.n_leapfrog > 0 ? ts.sum_metro_prob / ts.n_leapfrog : 0.0;
  t.energy = h0;
  z.q = std::move(z_sample.q);
  z.grad = std::move(z_sample.grad);
  z.log_density = z_sample.log_density;
  return t;
}

// ---------------------------------------------------------------------------
// Adaptation

StepSizeAdapter::StepSizeAdapter(double target_accept, double gamma, double t0, double kappa)
    : delta_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {}

void StepSizeAdapter::restart(double step) {
  mu_ = std::log(10.0 * step);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0.0;
}

double StepSizeAdapter::learn(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepSizeAdapter::final_step() const { return std::exp(x_bar_); }

WindowSchedule::WindowSchedule(std::size_t warmup, std::size_t init_buffer,
                               std::size_t term_buffer, std::size_t base_window)
    : warmup_(warmup), init_buffer_(init_buffer), term_buffer_(term_buffer) {
  if (warmup < 20) {
    init_buffer_ = warmup;
    term_buffer_ = 0;
    return;
  }
  if (init_buffer + base_window + term_buffer > warmup) {
    init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
    term_buffer_ = static_cast<std::size_t>(0.10 * static_cast<double>(warmup));
    base_window = warmup - (init_buffer_ + term_buffer_);
  }
  const std::size_t last = warmup_ - term_buffer_ - 1;
  std::size_t size = base_window;
  std::size_t end = init_buffer_ + size - 1;
  while (true) {
    ends_.push_back(end);
    if (end == last) break;
    size *= 2;
    end += size;
    if (end != last && end + 2 * size >= warmup_ - term_buffer_) end = last;
    if (end > last) end = last;
  }
}

bool WindowSchedule::in_window(std::size_t iter) const {
  return iter >= init_buffer_ && iter + term_buffer_ < warmup_ && !ends_.empty();
}

bool WindowSchedule::window_end(std::size_t iter) const {
  return std::find(ends_.begin(), ends_.end(), iter) != ends_.end();
}

double find_initial_step(const Target& target, const PhasePoint& z0, double step,
                         std::span<const double> inv_metric, Rng& rng) {
  const double threshold = std::log(0.5);
  auto trial = [&](double eps) {
    PhasePoint z = z0;
    sample_momentum(z, inv_metric, rng);
    const double h0 = hamiltonian(z, inv_metric);
    if (!leapfrog(target, z, eps, inv_metric)) return -kInf;
    const double dh = h0 - hamiltonian(z, inv_metric);
    return std::isnan(dh) ? -kInf : dh;
  };
  const int direction = trial(step) > threshold ? 1 : -1;
  while (true) {
    const double dh = trial(step);
    if (direction == 1 && !(dh > threshold)) break;
    if (direction == -1 && !(dh < threshold)) break;
    step = direction == 1 ? 2.0 * step : 0.5 * step;
    if (step > 1e7)
      throw std::runtime_error("step size search diverged to > 1e7; posterior may be improper");
    if (step < 1e-300)
      throw std::runtime_error("step size search collapsed to 0; no finite initial step found");
  }
  return step;
}

WarmupResult adapt(const Target& target, const SamplerConfig& config, std::vector<double> init,
                   Rng& rng) {
  WarmupResult out;
  const std::size_t d = target.dim();
  out.state.q = std::move(init);
  refresh(target, out.state);
  if (!finite_state(out.state))
    throw std::runtime_error("initial point has a non-finite log density or gradient");

  const bool diag = config.mass_matrix == MassMatrix::Diagonal;
  out.inv_metric.assign(d, 1.0);
  double step = config.initial_step;
  if (config.adapt_step_size) step = find_initial_step(target, out.state, step, out.inv_metric, rng);

  StepSizeAdapter dual(config.target_accept);
  dual.restart(step);
  WindowSchedule schedule(config.warmup);
  Welford estimator(d);
  NutsSampler nuts(target, config.max_tree_depth, config.max_energy_error);

  out.step_trace.reserve(config.warmup);
  out.accept_stats.reserve(config.warmup);
  for (std::size_t it = 0; it < config.warmup; ++it) {
    const auto t = nuts.transition(out.state, step, out.inv_metric, rng);
    out.step_trace.push_back(step);
    out.accept_stats.push_back(t.accept_stat);
    if (t.divergent) ++out.divergences;
    if (config.adapt_step_size) step = dual.learn(t.accept_stat);
    if (!diag) continue;
    if (schedule.in_window(it)) estimator.add(out.state.q);
    if (schedule.window_end(it)) {
      const auto var = estimator.variance();
      const double n = static_cast<double>(estimator.count());
      for (std::size_t i = 0; i < d; ++i)
        out.inv_metric[i] = (n / (n + 5.0)) * var[i] + 1e-3 * (5.0 / (n + 5.0));
      estimator.reset();
      if (config.adapt_step_size) {
        step = find_initial_step(target, out.state, step, out.inv_metric, rng);
        dual.restart(step);
      }
    }
  }
  if (config.adapt_step_size && config.warmup > 0) step = dual.final_step();
  out.step = step;
  return out;
}

// ---------------------------------------------------------------------------
// Draws

std::vector<double> ChainDraws::coordinate(std::size_t j) const {
  std::vector<double> out(num_draws());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = values[s * dim + j];
  return out;
}

std::size_t ChainDraws::divergences() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), 1));
}

std::size_t DrawStore::total_draws() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.num_draws();
  return n;
}

std::size_t DrawStore::divergences() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.divergences();
  return n;
}

double DrawStore::divergence_rate() const {
  const auto total = total_draws();
  return total == 0 ? 0.0 : static_cast<double>(divergences()) / static_cast<double>(total);
}

double DrawStore::mean_accept_stat() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    sum += std::accumulate(c.accept_stat.begin(), c.accept_stat.end(), 0.0);
    n += c.accept_stat.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<std::vector<double>> DrawStore::coordinate(std::size_t j) const {
  std::vector<std::vector<double>> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.push_back(c.coordinate(j));
  return out;
}

namespace {

ChainDraws run_chain(const Target& target, const SamplerConfig& config, std::size_t chain,
                     const std::vector<double>* init) {
  Rng rng = make_stream(config.seed, chain + 1);
  const std::size_t d = target.dim();

  std::vector<double> start;
  if (init != nullptr) {
    if (init->size() != d) throw std::invalid_argument("chain init has the wrong dimension");
    start = *init;
  } else {
    std::vector<double> g(d);
    for (int attempt = 0; attempt < 100; ++attempt) {
      start = target.initial_point(rng);
      const double lp = target.log_density_gradient(start, g);
      if (std::isfinite(lp) &&
          std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); }))
        break;
      if (attempt == 99)
        throw std::runtime_error("no initial point with finite log density after 100 attempts");
    }
  }

  ChainDraws out;
  out.dim = d;
  PhasePoint z;
  std::vector<double> inv_metric;
  double step = config.initial_step;
  if (config.warmup > 0) {
    auto warm = adapt(target, config, std::move(start), rng);
    z = std::move(warm.state);
    inv_metric = std::move(warm.inv_metric);
    step = warm.step;
    out.step_trace = std::move(warm.step_trace);
    out.warmup_divergences = warm.divergences;
  } else {
    z.q = std::move(start);
    refresh(target, z);
    inv_metric.assign(d, 1.0);
  }

  NutsSampler nuts(target, config.max_tree_depth, config.max_energy_error);
  out.values.reserve(config.draws * d);
  out.accept_stat.reserve(config.draws);
  for (std::size_t s = 0; s < config.draws; ++s) {
    const auto t = nuts.transition(z, step, inv_metric, rng);
    out.values.insert(out.values.end(), z.q.begin(), z.q.end());
    out.accept_stat.push_back(t.accept_stat);
    out.tree_depth.push_back(t.tree_depth);
    out.n_leapfrog.push_back(t.n_leapfrog);
    out.divergent.push_back(t.divergent ? 1 : 0);
    out.energy.push_back(t.energy);
    out.step_trace.push_back(step);
  }
  out.inv_metric = std::move(inv_metric);
  out.step = step;
  return out;
}

}  // namespace

DrawStore run(const Target& target, const SamplerConfig& config,
              std::vector<std::vector<double>> inits) {
  config.validate();
  if (!inits.empty() && inits.size() != config.chains)
    throw std::invalid_argument("run: need one init per chain");

  DrawStore store;
  store.dim = target.dim();
  store.chains.resize(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);

  std::size_t workers = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.chains);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next++; c < config.chains; c = next++) {
      try {
        store.chains[c] = run_chain(target, config, c, inits.empty() ? nullptr : &inits[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return store;
}

}  // namespace svhmc::hmc
