// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/dynamics.hpp"

#include <cmath>

#include "deltaspike/error.hpp"

namespace deltaspike::dynamics {

void LifConfig::validate() const {
  if (!(tau_mem > 0.0)) throw ParameterError("tau_mem must be > 0");
  if (!(dt > 0.0)) throw ParameterError("dt must be > 0");
}

double beta_from_tau(double tau_mem, double dt) {
  if (!(tau_mem > 0.0)) throw ParameterError("beta_from_tau: tau_mem must be > 0");
  if (!(dt >= 0.0)) throw ParameterError("beta_from_tau: dt must be >= 0");
  return std::exp(-dt / tau_mem);
}

std::vector<double> lif_exact_solve(std::span<const double> input_current,
                                    const LifConfig& cfg, double u0) {
  cfg.validate();
  // Over one interval with constant input c:
  //   u(t + h) = e^{-h/tau} u(t) + (1 - e^{-h/tau}) c
  const double decay = std::exp(-cfg.dt / cfg.tau_mem);
  const double gain = -std::expm1(-cfg.dt / cfg.tau_mem);
  std::vector<double> u;
  u.reserve(input_current.size() + 1);
  u.push_back(u0);
  for (double c : input_current) u.push_back(decay * u.back() + gain * c);
  return u;
}

CellState lif_discrete_step(const CellState& state, std::span<const double> input,
                            double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ParameterError("lif_discrete_step: beta must be in [0, 1]");
  }
  if (input.size() != state.potential.size()) {
    throw ParameterError("lif_discrete_step: input/state size mismatch");
  }
  CellState next;
  next.current.assign(input.begin(), input.end());
  next.potential.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    next.potential[i] = beta * state.potential[i] + (1.0 - beta) * input[i];
  }
  return next;
}

}  // namespace deltaspike::dynamics
