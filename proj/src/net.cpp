// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/net.hpp"

#include <cmath>
#include <random>

#include "cell.hpp"

namespace deltaspike::net {

namespace detail {

void run_cell(double beta, std::span<const double> threshold, bool lateral,
              const ForwardOptions& options, LayerTrace& trace) {
  const Tensor& current = trace.current;
  const std::size_t steps = current.dim(0);
  const std::size_t channels = current.shape().back();
  const std::size_t sites = current.size() / (steps * channels);
  const Tensor& g = trace.coupling;

  trace.reset = Tensor(current.shape());
  trace.potential = Tensor(current.shape());
  trace.spikes = Tensor(current.shape());
  trace.mode = options.mode;
  trace.sigma = options.sigma;

  std::vector<double> norm(channels);
  for (std::size_t p = 0; p < channels; ++p) norm[p] = trace.normalizer(p);

  const std::size_t stride = sites * channels;
  for (std::size_t n = 0; n < steps; ++n) {
    for (std::size_t s = 0; s < sites; ++s) {
      const std::size_t base = n * stride + s * channels;
      double* r = trace.reset.data() + base;
      if (n > 0) {
        const double* prev = trace.spikes.data() + base - stride;
        if (lateral) {
          for (std::size_t l = 0; l < channels; ++l) {
            const double sl = prev[l];
            if (sl == 0.0) continue;
            for (std::size_t p = 0; p < channels; ++p) r[p] += g.at(p, l) * sl;
          }
        } else {
          for (std::size_t p = 0; p < channels; ++p) r[p] = g.at(p, p) * prev[p];
        }
      }
      const double* i_now = current.data() + base;
      double* u = trace.potential.data() + base;
      double* out = trace.spikes.data() + base;
      const double* u_before = n > 0 ? u - stride : nullptr;
      for (std::size_t p = 0; p < channels; ++p) {
        const double u_prev = u_before ? u_before[p] : 0.0;
        u[p] = beta * (u_prev - r[p]) + (1.0 - beta) * i_now[p];
        const double v = u[p] / norm[p] - threshold[p];
        out[p] = options.mode == SpikeMode::kHard
                     ? (v >= 0.0 ? 1.0 : 0.0)
                     : scaled_sigmoid(v, options.sigma);
      }
    }
  }
}

ConvGeometry conv_geometry(const ConvLayerParams& params, const Tensor& input) {
  if (params.kernels.rank() != 4) {
    throw ParameterError("conv layer: kernels must be C_out x C_in x H x W");
  }
  if (input.rank() != 3) {
    throw ParameterError("conv layer: input must be [T x F x C], got " +
                         shape_string(input.shape()));
  }
  if (params.dilation_t < 1 || params.dilation_f < 1) {
    throw ParameterError("conv layer: dilations must be >= 1");
  }
  ConvGeometry geo{input.dim(0),         input.dim(1),
                   input.dim(2),         params.out_channels(),
                   params.kernel_t(),    params.kernel_f(),
                   params.dilation_t,    params.dilation_f,
                   0};
  if (geo.in_channels != params.in_channels()) {
    throw ParameterError("conv layer: kernel expects " +
                         std::to_string(params.in_channels()) +
                         " input channels, input has " +
                         std::to_string(geo.in_channels));
  }
  if (geo.kernel_t == 0 || geo.kernel_f == 0 || geo.out_channels == 0) {
    throw ParameterError("conv layer: empty kernel");
  }
  const std::size_t extent_f = (geo.kernel_f - 1) * geo.dilation_f + 1;
  if (extent_f > geo.bins) {
    throw ParameterError("conv layer: dilated kernel spans " +
                         std::to_string(extent_f) + " bins but input has " +
                         std::to_string(geo.bins));
  }
  if (params.threshold.size() != geo.out_channels) {
    throw ParameterError("conv layer: need one threshold per output channel");
  }
  geo.pad_left = (geo.kernel_f - 1) * geo.dilation_f / 2;
  return geo;
}

Tensor kernels_to_tap_major(const Tensor& k) {
  const std::size_t co = k.dim(0), ci = k.dim(1), h = k.dim(2), w = k.dim(3);
  Tensor taps({h, w, ci, co});
  for (std::size_t p = 0; p < co; ++p)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b) taps.at(a, b, c, p) = k.at(p, c, a, b);
  return taps;
}

Tensor kernels_from_tap_major(const Tensor& taps, std::size_t co, std::size_t ci,
                              std::size_t h, std::size_t w) {
  Tensor k({co, ci, h, w});
  for (std::size_t p = 0; p < co; ++p)
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b) k.at(p, c, a, b) = taps.at(a, b, c, p);
  return k;
}

}  // namespace detail

namespace {

void check_finite(const Tensor& input, const char* where) {
  for (double v : input.values()) {
    if (!std::isfinite(v)) {
      throw DataError(std::string(where) + ": non-finite value in input");
    }
  }
}

void check_cell_params(double beta, std::span<const double> b, const char* where) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ParameterError(std::string(where) + ": beta must be in [0, 1]");
  }
  for (double v : b) {
    if (!(v >= 0.0)) {
      throw ParameterError(std::string(where) + ": thresholds must be >= 0");
    }
  }
}

}  // namespace

Tensor row_gram(const Tensor& weight) {
  const std::size_t rows = weight.dim(0);
  const std::size_t width = weight.size() / rows;
  Tensor g({rows, rows});
  for (std::size_t p = 0; p < rows; ++p) {
    const double* wp = weight.data() + p * width;
    for (std::size_t l = p; l < rows; ++l) {
      const double* wl = weight.data() + l * width;
      double dot = 0.0;
      for (std::size_t k = 0; k < width; ++k) dot += wp[k] * wl[k];
      g.at(p, l) = dot;
      g.at(l, p) = dot;
    }
  }
  return g;
}

LayerTrace fc_spiking_forward(const FcLayerParams& params, const Tensor& input,
                              const ForwardOptions& options) {
  if (params.weight.rank() != 2) {
    throw ParameterError("fc layer: weight must be a matrix");
  }
  const auto [steps, width] = detail::steps_and_width(input);
  const std::size_t out = params.weight.dim(0);
  if (steps == 0 || width != params.weight.dim(1)) {
    throw ParameterError("fc layer: input " + shape_string(input.shape()) +
                         " does not match weight " +
                         shape_string(params.weight.shape()));
  }
  if (params.threshold.size() != out) {
    throw ParameterError("fc layer: need one threshold per neuron");
  }
  check_cell_params(params.beta, params.threshold, "fc layer");
  check_finite(input, "fc layer");

  LayerTrace trace;
  trace.input = input;
  trace.coupling = row_gram(params.weight);
  trace.current = Tensor({steps, out});

  // Column-major walk so zero inputs (silent spikes) are skipped.
  Tensor wt({width, out});
  for (std::size_t p = 0; p < out; ++p)
    for (std::size_t c = 0; c < width; ++c) wt.at(c, p) = params.weight.at(p, c);

  for (std::size_t n = 0; n < steps; ++n) {
    const double* x = input.data() + n * width;
    double* cur = trace.current.data() + n * out;
    for (std::size_t c = 0; c < width; ++c) {
      const double xv = x[c];
      if (xv == 0.0) continue;
      const double* wc = wt.data() + c * out;
      for (std::size_t p = 0; p < out; ++p) cur[p] += wc[p] * xv;
    }
  }
  detail::run_cell(params.beta, params.threshold, params.lateral, options, trace);
  return trace;
}

LayerTrace conv_spiking_forward(const ConvLayerParams& params,
                                const Tensor& input,
                                const ForwardOptions& options) {
  const detail::ConvGeometry geo = detail::conv_geometry(params, input);
  check_cell_params(params.beta, params.threshold, "conv layer");
  check_finite(input, "conv layer");

  LayerTrace trace;
  trace.input = input;
  trace.coupling = row_gram(params.kernels);
  trace.current = Tensor({geo.steps, geo.bins, geo.out_channels});
  const Tensor taps = detail::kernels_to_tap_major(params.kernels);

  const std::size_t ci = geo.in_channels, co = geo.out_channels;
  for (std::size_t n = 0; n < geo.steps; ++n) {
    for (std::size_t f = 0; f < geo.bins; ++f) {
      double* cur = &trace.current.at(n, f, 0);
      for (std::size_t a = 0; a < geo.kernel_t; ++a) {
        const std::size_t lag = (geo.kernel_t - 1 - a) * geo.dilation_t;
        if (lag > n) continue;
        const std::size_t tin = n - lag;
        for (std::size_t b = 0; b < geo.kernel_f; ++b) {
          const std::ptrdiff_t fin = static_cast<std::ptrdiff_t>(f + b * geo.dilation_f) -
                                     static_cast<std::ptrdiff_t>(geo.pad_left);
          if (fin < 0 || fin >= static_cast<std::ptrdiff_t>(geo.bins)) continue;
          const double* x = &input.at(tin, static_cast<std::size_t>(fin), 0);
          const double* k = &taps.at(a, b, 0, 0);
          for (std::size_t c = 0; c < ci; ++c) {
            const double xv = x[c];
            if (xv == 0.0) continue;
            const double* kc = k + c * co;
            for (std::size_t p = 0; p < co; ++p) cur[p] += kc[p] * xv;
          }
        }
      }
    }
  }
  detail::run_cell(params.beta, params.threshold, params.lateral, options, trace);
  return trace;
}

std::vector<double> readout_forward(const ReadoutParams& params,
                                    const Tensor& input) {
  const auto [steps, width] = detail::steps_and_width(input);
  if (steps == 0) throw ParameterError("readout: need at least one step");
  if (params.weight.rank() != 2 || params.weight.dim(1) != width ||
      params.bias.size() != params.weight.dim(0)) {
    throw ParameterError("readout: input " + shape_string(input.shape()) +
                         " does not match weight " +
                         shape_string(params.weight.shape()));
  }
  std::vector<double> mean(width, 0.0);
  for (std::size_t n = 0; n < steps; ++n) {
    const double* x = input.data() + n * width;
    for (std::size_t j = 0; j < width; ++j) mean[j] += x[j];
  }
  for (double& m : mean) m /= static_cast<double>(steps);

  std::vector<double> logits(params.bias);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double* w = params.weight.data() + k * width;
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) acc += w[j] * mean[j];
    logits[k] += acc;
  }
  return logits;
}

double NetworkOutput::firing_rate_hz(std::size_t layer) const {
  const double denom = static_cast<double>(neurons.at(layer)) *
                       static_cast<double>(steps) * kStepSeconds;
  return denom > 0.0 ? spike_counts.at(layer) / denom : 0.0;
}

NetworkOutput network_forward(const NetworkParams& params, const Tensor& input,
                              const ForwardOptions& options) {
  NetworkOutput out;
  out.steps = input.rank() > 0 ? input.dim(0) : 0;
  const Tensor* x = &input;
  for (const auto& layer : params.layers) {
    out.traces.push_back(std::visit(
        [&](const auto& p) -> LayerTrace {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, FcLayerParams>) {
            return fc_spiking_forward(p, *x, options);
          } else {
            return conv_spiking_forward(p, *x, options);
          }
        },
        layer));
    const LayerTrace& t = out.traces.back();
    double count = 0.0;
    for (double s : t.spikes.values()) count += s;
    out.spike_counts.push_back(count);
    out.neurons.push_back(t.spikes.size() / t.steps());
    x = &t.spikes;
  }
  out.logits = readout_forward(params.readout, *x);
  return out;
}

ModelConfig ModelConfig::speech_commands() {
  ModelConfig cfg;
  cfg.layers = {
      {LayerSpec::Kind::kConv, 64, 4, 3, 1, 1},
      {LayerSpec::Kind::kConv, 64, 4, 3, 4, 3},
      {LayerSpec::Kind::kConv, 64, 4, 3, 16, 9},
  };
  return cfg;
}

std::size_t readout_inputs(const ModelConfig& config) {
  std::size_t sites = config.input_bins;
  std::size_t channels = config.input_channels;
  for (const LayerSpec& spec : config.layers) {
    if (spec.kind == LayerSpec::Kind::kFc) {
      sites = 1;
    }
    channels = spec.units;
  }
  return sites * channels;
}

NetworkParams init_network(const ModelConfig& config, std::uint64_t seed) {
  if (config.n_classes < 2) throw ParameterError("model: need >= 2 classes");
  if (!(config.init_gain > 0.0)) throw ParameterError("model: init_gain must be > 0");
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&rng](Tensor& t, double fan_in, double gain) {
    const double bound = gain / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.storage()) v = dist(rng);
  };
  const double beta = std::exp(-config.dt / config.tau_mem);

  NetworkParams params;
  std::size_t sites = config.input_bins;
  std::size_t channels = config.input_channels;
  bool flat = false;
  for (const LayerSpec& spec : config.layers) {
    if (spec.units == 0) throw ParameterError("model: layer with zero units");
    if (spec.kind == LayerSpec::Kind::kFc) {
      const std::size_t in = sites * channels;
      FcLayerParams fc;
      fc.weight = Tensor({spec.units, in});
      fill_uniform(fc.weight, static_cast<double>(in), config.init_gain);
      fc.beta = beta;
      fc.threshold.assign(spec.units, config.threshold_init);
      fc.lateral = config.lateral;
      params.layers.emplace_back(std::move(fc));
      sites = 1;
      flat = true;
    } else {
      if (flat) throw ParameterError("model: conv layer after fc layer");
      ConvLayerParams conv;
      conv.kernels = Tensor({spec.units, channels, spec.kernel_t, spec.kernel_f});
      fill_uniform(conv.kernels,
                   static_cast<double>(channels * spec.kernel_t * spec.kernel_f),
                   config.init_gain);
      conv.beta = beta;
      conv.threshold.assign(spec.units, config.threshold_init);
      conv.dilation_t = spec.dilation_t;
      conv.dilation_f = spec.dilation_f;
      conv.lateral = config.lateral;
      params.layers.emplace_back(std::move(conv));
    }
    channels = spec.units;
  }
  const std::size_t in = sites * channels;
  params.readout.weight = Tensor({config.n_classes, in});
  fill_uniform(params.readout.weight, static_cast<double>(in), 1.0);
  params.readout.bias.assign(config.n_classes, 0.0);
  return params;
}

}  // namespace deltaspike::net
