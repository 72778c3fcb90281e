// SPDX-License-Identifier: Apache-2.0
//
// Leaky integrate-and-fire membrane dynamics, tau du/dt = -u + i (rest
// potential 0, unit resistance): the closed-form solution for piecewise
// constant input and the first-order recurrence used by the network cells.
#pragma once

#include <span>
#include <vector>

namespace deltaspike::dynamics {

struct LifConfig {
  double tau_mem = 20e-3;  // seconds
  double dt = 10e-3;       // seconds

  void validate() const;
};

/// Per-neuron membrane potentials and input currents at one step.
struct CellState {
  std::vector<double> potential;
  std::vector<double> current;
};

/// exp(-dt / tau_mem).
double beta_from_tau(double tau_mem, double dt);

/// Exact solution for input held constant on each interval
/// [k*dt, (k+1)*dt), with cfg.dt the sampling step of `input_current`.
/// Returns input_current.size() + 1 samples, u(0) = u0 first.
std::vector<double> lif_exact_solve(std::span<const double> input_current,
                                    const LifConfig& cfg, double u0);

/// U <- beta * U + (1 - beta) * input. Resets are the caller's business.
CellState lif_discrete_step(const CellState& state, std::span<const double> input,
                            double beta);

}  // namespace deltaspike::dynamics
