#pragma once

#include <vector>

namespace svhmc {

/// Constrained parameter point of the SV model.
struct ParamState {
  double mu = 0.0;     // level of the log-volatility
  double phi = 0.0;    // persistence, |phi| < 1
  double sigma = 1.0;  // sd of the log-volatility innovations, > 0
  double nu = 0.0;     // error-family shape, ignored for Gaussian
  std::vector<double> h;  // latent log-volatilities h_1..h_n
};

}  // namespace svhmc
