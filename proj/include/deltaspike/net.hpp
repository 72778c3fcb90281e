// SPDX-License-Identifier: Apache-2.0
//
// Forward pass of the feed-forward spiking network.
//
// Every spiking layer runs the same cell recurrence over its output
// neurons, grouped into sites (receptive-field positions) of C channels:
//
//   I[n] = linear map of the layer input at step n (dense or convolution)
//   R[n] = G s[n-1]            lateral reset, G = W W^T over vectorized rows
//        = diag(G) s[n-1]      self reset only, when lateral is disabled
//   U[n] = beta (U[n-1] - R[n]) + (1 - beta) I[n]
//   s[n] = H(U[n] / (G_pp + eps) - b_p)
//
// with H the Heaviside step (hard mode) or the sigmoid of scale sigma
// (relaxed mode). Activations are laid out [time][site][channel].
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "deltaspike/tensor.hpp"

namespace deltaspike::net {

inline constexpr double kThresholdEpsilon = 1e-8;
/// Simulation step used for firing-rate bookkeeping, in seconds.
inline constexpr double kStepSeconds = 10e-3;

enum class SpikeMode { kHard, kRelaxed };

struct ForwardOptions {
  SpikeMode mode = SpikeMode::kHard;
  double sigma = 10.0;  // sigmoid scale for relaxed spikes and the surrogate
};

struct FcLayerParams {
  Tensor weight;  // out x in
  double beta = 0.5;
  std::vector<double> threshold;  // b, one per output neuron
  bool lateral = true;
};

struct ConvLayerParams {
  Tensor kernels;  // C_out x C_in x H (time) x W (frequency)
  double beta = 0.5;
  std::vector<double> threshold;  // b, one per output channel
  std::size_t dilation_t = 1;
  std::size_t dilation_f = 1;
  bool lateral = true;

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_t() const { return kernels.dim(2); }
  std::size_t kernel_f() const { return kernels.dim(3); }
};

struct ReadoutParams {
  Tensor weight;  // n_classes x in
  std::vector<double> bias;
};

using SpikingLayerParams = std::variant<FcLayerParams, ConvLayerParams>;

struct NetworkParams {
  std::vector<SpikingLayerParams> layers;
  ReadoutParams readout;
};

/// Everything the backward pass needs from one layer's forward run.
/// current/reset/potential/spikes share the output shape: [T x out] for
/// fully-connected layers, [T x F x C] for convolutional ones.
struct LayerTrace {
  Tensor input;
  Tensor current;
  Tensor reset;
  Tensor potential;
  Tensor spikes;
  Tensor coupling;  // C x C gram matrix of the vectorized weight rows
  SpikeMode mode = SpikeMode::kHard;
  double sigma = 10.0;

  std::size_t steps() const { return spikes.dim(0); }
  std::size_t channels() const { return spikes.shape().back(); }
  std::size_t sites() const { return spikes.size() / (steps() * channels()); }
  double normalizer(std::size_t p) const {
    return coupling.at(p, p) + kThresholdEpsilon;
  }
};

/// Input may be [T x in] or any [T x ...] tensor, flattened per step.
LayerTrace fc_spiking_forward(const FcLayerParams& params, const Tensor& input,
                              const ForwardOptions& options = {});

/// Input is [T x F x C_in]. Time is padded causally, frequency symmetrically,
/// so the output is [T x F x C_out].
LayerTrace conv_spiking_forward(const ConvLayerParams& params,
                                const Tensor& input,
                                const ForwardOptions& options = {});

/// Mean over time of W s[n] + bias. Input [T x ...] is flattened per step.
std::vector<double> readout_forward(const ReadoutParams& params,
                                    const Tensor& input);

struct NetworkOutput {
  std::vector<double> logits;
  std::vector<LayerTrace> traces;
  std::vector<double> spike_counts;    // per spiking layer
  std::vector<std::size_t> neurons;    // per spiking layer, sites x channels
  std::size_t steps = 0;

  /// Spikes per neuron per second at kStepSeconds.
  double firing_rate_hz(std::size_t layer) const;
};

NetworkOutput network_forward(const NetworkParams& params, const Tensor& input,
                              const ForwardOptions& options = {});

/// Gram matrix of the rows of an (out x anything) tensor.
Tensor row_gram(const Tensor& weight);

// Architecture description, used for initialization and checkpoints.

struct LayerSpec {
  enum class Kind { kFc, kConv };
  Kind kind = Kind::kConv;
  std::size_t units = 64;  // output neurons (fc) or channels (conv)
  std::size_t kernel_t = 1;
  std::size_t kernel_f = 1;
  std::size_t dilation_t = 1;
  std::size_t dilation_f = 1;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelConfig {
  std::size_t input_steps = 98;
  std::size_t input_bins = 40;
  std::size_t input_channels = 3;
  std::vector<LayerSpec> layers;
  std::size_t n_classes = 12;
  bool lateral = true;
  double tau_mem = 20e-3;
  double dt = kStepSeconds;
  double threshold_init = 1.0;
  /// Weights start Uniform(+-init_gain / sqrt(fan_in)). The normalized
  /// potential scales as 1 / gain, so a gain below 1 keeps deep layers firing.
  double init_gain = 0.4;

  /// Three 64-channel 4x3 convolutions with dilations (1,1), (4,3), (16,9).
  static ModelConfig speech_commands();

  bool operator==(const ModelConfig&) const = default;
};

/// Uniform(+-init_gain/sqrt(fan_in)) spiking weights, Uniform(+-1/sqrt(fan_in))
/// readout weights, thresholds at threshold_init, beta from tau_mem and dt,
/// zero readout bias.
NetworkParams init_network(const ModelConfig& config, std::uint64_t seed);

/// Shape of the tensor feeding the readout for this architecture.
std::size_t readout_inputs(const ModelConfig& config);

std::string to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace deltaspike::net
