// SPDX-License-Identifier: Apache-2.0
//
// Surrogate-gradient backpropagation through time, losses, the rectified
// Adam optimizer with the parameter clamps, training and gradient checking.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deltaspike/example.hpp"
#include "deltaspike/net.hpp"

namespace deltaspike::learn {

struct SurrogateConfig {
  double sigma = 10.0;
};

/// sigma * s * (1 - s) with s = 1 / (1 + exp(-sigma u)).
double surrogate_grad(double u, const SurrogateConfig& cfg = {});

/// (1 / 2KN) sum_n sum_k S_k[n]^2 over a [T x ...] spike tensor.
double spike_count_loss(const Tensor& spikes);

/// Cross-entropy of softmax(logits) against `label`.
double classification_loss(std::span<const double> logits, int label);
std::vector<double> softmax(std::span<const double> logits);

struct LossSpec {
  double reg_coeff_base = 0.1;

  /// Weight of layer l's spike-count loss, l in [0, L): base * (l + 1) / L.
  double layer_coeff(std::size_t layer, std::size_t n_layers) const {
    return reg_coeff_base * static_cast<double>(layer + 1) /
           static_cast<double>(n_layers);
  }
};

enum class ParamKind { kWeight, kBeta, kThreshold, kReadoutWeight, kReadoutBias };

const char* param_kind_name(ParamKind kind);

/// Calls fn(name, values, kind) for every trainable parameter, in a fixed
/// order. Scalars (beta) are exposed as one-element spans.
void visit_parameters(net::NetworkParams& params,
                      const std::function<void(const std::string&,
                                               std::span<double>, ParamKind)>& fn);
void visit_parameters(const net::NetworkParams& params,
                      const std::function<void(const std::string&,
                                               std::span<const double>,
                                               ParamKind)>& fn);

/// Same structure as `params`, all values zero.
net::NetworkParams zeros_like(const net::NetworkParams& params);
std::size_t parameter_count(const net::NetworkParams& params);

struct ExampleLoss {
  double total = 0.0;
  double classification = 0.0;
  double regularization = 0.0;
};

/// Total loss of one forward output: cross-entropy plus the weighted
/// spike-count losses.
ExampleLoss example_loss(const net::NetworkOutput& output, int label,
                         const LossSpec& loss);

/// Reverse-mode pass through the unrolled network for one example.
/// Adds `weight` times the gradient of example_loss into `grads`.
/// The backward uses surrogate_grad at every threshold in hard mode and
/// the exact sigmoid derivative in relaxed mode (the same function).
ExampleLoss backward(const net::NetworkParams& params,
                     const net::NetworkOutput& output, int label,
                     const LossSpec& loss, net::NetworkParams& grads,
                     double weight = 1.0);

struct BatchResult {
  double loss = 0.0;  // mean total loss
  std::size_t correct = 0;
  std::vector<double> spike_counts;  // per layer, summed over the batch
  std::vector<std::size_t> neurons;
  std::size_t steps = 0;
  net::NetworkParams grads;  // gradient of the mean loss
};

/// Forward + backward over a batch. Items may be processed on `threads`
/// workers; per-item gradients are reduced in item order, so the result is
/// independent of the thread count.
BatchResult bptt_gradients(const net::NetworkParams& params,
                           std::span<const LabeledExample* const> batch,
                           const LossSpec& loss,
                           const net::ForwardOptions& options,
                           unsigned threads = 1);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 1;
  double weight_decay = 1e-5;
  double grad_clip = 5.0;
  double reg_coeff_base = 0.1;
  net::SpikeMode forward_mode = net::SpikeMode::kHard;
  double sigma = 10.0;
  std::size_t batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  unsigned threads = 1;
};

/// Rectified Adam moments and step counter.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// Clips every gradient component to [-clip, clip], applies one rectified
/// Adam update at learning rate `lr` with decoupled weight decay on the
/// weight tensors, then clamps beta to [0, 1] and thresholds to [0, inf).
void optimizer_step(net::NetworkParams& params, const net::NetworkParams& grads,
                    const TrainConfig& cfg, OptimizerState& state, double lr);

/// Warmup-scaled learning rate for a 0-based global step.
double scheduled_lr(const TrainConfig& cfg, std::uint64_t step,
                    std::size_t steps_per_epoch);

void clamp_parameters(net::NetworkParams& params);

struct SplitMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> firing_rate_hz;  // per spiking layer
  double mean_firing_rate_hz = 0.0;    // over all spiking neurons
};

struct EpochMetrics {
  std::size_t epoch = 0;
  SplitMetrics train;
  SplitMetrics validation;
};

SplitMetrics evaluate(const net::NetworkParams& params,
                      std::span<const LabeledExample> examples,
                      const LossSpec& loss, const net::ForwardOptions& options,
                      unsigned threads = 1);

/// Newline-delimited JSON metric record for one split of one epoch.
std::string metrics_record(std::size_t epoch, const std::string& split,
                           const SplitMetrics& m);

struct TrainResult {
  net::NetworkParams params;
  std::vector<EpochMetrics> history;
};

/// Called after every epoch with the current parameters.
using EpochCallback =
    std::function<void(const EpochMetrics&, const net::NetworkParams&)>;

/// Minimizes cross-entropy plus the layer-weighted spike-count losses.
/// Initialization and shuffling draw from `seed` only. Throws
/// DivergenceError on a non-finite loss.
TrainResult train_loop(const DatasetSplits& data, const net::ModelConfig& model,
                       const TrainConfig& cfg, std::uint64_t seed,
                       const EpochCallback& on_epoch = {});

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  std::size_t max_neurons = 16;
  std::size_t max_steps = 12;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  double sigma = 10.0;
  /// Test hook: scales the analytic gradient of one parameter class so the
  /// check must fail.
  bool corrupt_backward = false;
};

struct GradcheckReport {
  double worst_relative_error = 0.0;
  std::vector<std::pair<ParamKind, double>> worst_by_kind;
  std::size_t checked = 0;
  bool passed = false;
};

/// Relaxed-mode gradients against fourth-order central finite differences
/// (step fd_step) on random two-layer networks: fc->fc, conv->fc and
/// conv->conv, with and without lateral resets.
GradcheckReport gradcheck(const GradcheckOptions& options);

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
/// dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace deltaspike::learn
