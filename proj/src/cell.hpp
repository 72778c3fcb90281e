// SPDX-License-Identifier: Apache-2.0
//
// Shared pieces of the spiking cell used by the forward and backward passes.
#pragma once

#include <cmath>
#include <span>

#include "deltaspike/net.hpp"

namespace deltaspike::net::detail {

inline double scaled_sigmoid(double x, double sigma) {
  const double z = sigma * x;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// d/dx sigmoid(sigma x) = sigma s (1 - s).
inline double scaled_sigmoid_grad(double x, double sigma) {
  const double s = scaled_sigmoid(x, sigma);
  return sigma * s * (1.0 - s);
}

/// Runs the reset/integrate/fire recurrence. Expects trace.current and
/// trace.coupling to be filled; writes reset, potential and spikes.
void run_cell(double beta, std::span<const double> threshold, bool lateral,
              const ForwardOptions& options, LayerTrace& trace);

struct ConvGeometry {
  std::size_t steps, bins, in_channels, out_channels;
  std::size_t kernel_t, kernel_f, dilation_t, dilation_f;
  std::size_t pad_left;  // frequency padding before bin 0
};

ConvGeometry conv_geometry(const ConvLayerParams& params, const Tensor& input);

/// [C_out x C_in x H x W] -> [H x W x C_in x C_out].
Tensor kernels_to_tap_major(const Tensor& kernels);
Tensor kernels_from_tap_major(const Tensor& taps, std::size_t c_out,
                              std::size_t c_in, std::size_t h, std::size_t w);

/// Steps and flattened per-step width of a [T x ...] tensor.
inline std::pair<std::size_t, std::size_t> steps_and_width(const Tensor& t) {
  if (t.rank() < 2 || t.dim(0) == 0) return {0, 0};
  return {t.dim(0), t.size() / t.dim(0)};
}

}  // namespace deltaspike::net::detail
