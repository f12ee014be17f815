#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svhmc/rng.hpp"

namespace svhmc::hmc {

/// Unnormalized log density on R^dim with its gradient. Implementations must
/// be safe to call concurrently from several chains.
class Target {
 public:
  virtual ~Target() = default;

  virtual std::size_t dim() const = 0;

  /// Returns log p(q) up to a constant and writes d log p / dq into grad.
  /// Non-finite values are allowed; the sampler treats them as divergent.
  virtual double log_density_gradient(std::span<const double> q,
                                      std::span<double> grad) const = 0;

  /// Starting point for a chain; uniform on (-2, 2)^dim unless overridden.
  virtual std::vector<double> initial_point(Rng& rng) const;
};

}  // namespace svhmc::hmc
