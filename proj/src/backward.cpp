// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <thread>

#include "cell.hpp"
#include "deltaspike/learn.hpp"
#include "params.hpp"

namespace deltaspike::learn {

using net::ConvLayerParams;
using net::FcLayerParams;
using net::LayerTrace;
using net::NetworkOutput;
using net::NetworkParams;

double surrogate_grad(double u, const SurrogateConfig& cfg) {
  return net::detail::scaled_sigmoid_grad(u, cfg.sigma);
}

double spike_count_loss(const Tensor& spikes) {
  if (spikes.empty()) return 0.0;
  double acc = 0.0;
  for (double s : spikes.values()) acc += s * s;
  return acc / (2.0 * static_cast<double>(spikes.size()));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double top = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

double classification_loss(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ParameterError("classification_loss: label " + std::to_string(label) +
                         " out of range for " + std::to_string(logits.size()) +
                         " classes");
  }
  for (double v : logits) {
    if (std::isnan(v)) throw DataError("classification_loss: NaN logit");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  if (std::isinf(top)) {
    // One-hot limit: zero loss if the label owns the +inf logit.
    return logits[static_cast<std::size_t>(label)] == top
               ? 0.0
               : std::numeric_limits<double>::infinity();
  }
  double z = 0.0;
  for (double v : logits) z += std::exp(v - top);
  return std::log(z) - (logits[static_cast<std::size_t>(label)] - top);
}

ExampleLoss example_loss(const NetworkOutput& output, int label,
                         const LossSpec& loss) {
  ExampleLoss r;
  r.classification = classification_loss(output.logits, label);
  const std::size_t layers = output.traces.size();
  for (std::size_t l = 0; l < layers; ++l) {
    r.regularization +=
        loss.layer_coeff(l, layers) * spike_count_loss(output.traces[l].spikes);
  }
  r.total = r.classification + r.regularization;
  return r;
}

namespace {

struct CellGrads {
  Tensor current;
  Tensor coupling;
  double beta = 0.0;
  std::vector<double> threshold;
};

CellGrads cell_backward(const LayerTrace& t, double beta,
                        std::span<const double> threshold, bool lateral,
                        const Tensor& grad_spikes) {
  const std::size_t steps = t.steps();
  const std::size_t channels = t.channels();
  const std::size_t sites = t.sites();
  const std::size_t stride = sites * channels;
  const Tensor& g = t.coupling;

  CellGrads out;
  out.current = Tensor(t.current.shape());
  out.coupling = Tensor({channels, channels});
  out.threshold.assign(channels, 0.0);
  std::vector<double> grad_norm(channels, 0.0);
  std::vector<double> norm(channels);
  for (std::size_t p = 0; p < channels; ++p) norm[p] = t.normalizer(p);

  std::vector<double> gu_next(stride, 0.0);  // dL/dU[n+1]
  std::vector<double> gs_reset(stride, 0.0);  // dL/ds[n] through R[n+1]
  std::vector<double> gr(channels);

  for (std::size_t n = steps; n-- > 0;) {
    for (std::size_t s = 0; s < sites; ++s) {
      const std::size_t base = n * stride + s * channels;
      const std::size_t local = s * channels;
      for (std::size_t p = 0; p < channels; ++p) {
        const double u = t.potential[base + p];
        const double v = u / norm[p] - threshold[p];
        const double gv = (grad_spikes[base + p] + gs_reset[local + p]) *
                          net::detail::scaled_sigmoid_grad(v, t.sigma);
        const double gu = beta * gu_next[local + p] + gv / norm[p];
        out.threshold[p] -= gv;
        grad_norm[p] -= gv * u / (norm[p] * norm[p]);
        out.current[base + p] = (1.0 - beta) * gu;
        const double u_prev = n > 0 ? t.potential[base - stride + p] : 0.0;
        out.beta += gu * (u_prev - t.reset[base + p] - t.current[base + p]);
        gr[p] = -beta * gu;
        gu_next[local + p] = gu;
      }
      double* gsr = gs_reset.data() + local;
      if (n == 0) {
        std::fill(gsr, gsr + channels, 0.0);
        continue;
      }
      const double* prev = t.spikes.data() + base - stride;
      if (lateral) {
        for (std::size_t l = 0; l < channels; ++l) {
          const double* gl = g.data() + l * channels;  // G symmetric
          double acc = 0.0;
          for (std::size_t p = 0; p < channels; ++p) acc += gl[p] * gr[p];
          gsr[l] = acc;
          const double sl = prev[l];
          if (sl == 0.0) continue;
          for (std::size_t p = 0; p < channels; ++p) {
            out.coupling.at(p, l) += gr[p] * sl;
          }
        }
      } else {
        for (std::size_t p = 0; p < channels; ++p) {
          gsr[p] = g.at(p, p) * gr[p];
          out.coupling.at(p, p) += gr[p] * prev[p];
        }
      }
    }
  }
  for (std::size_t p = 0; p < channels; ++p) out.coupling.at(p, p) += grad_norm[p];
  return out;
}

/// G = W W^T over flattened rows: dL/dW_p += sum_l (gG_pl + gG_lp) W_l.
void gram_backward(const Tensor& weight, const Tensor& grad_gram, Tensor& grad_weight) {
  const std::size_t rows = weight.dim(0);
  const std::size_t width = weight.size() / rows;
  for (std::size_t p = 0; p < rows; ++p) {
    double* gw = grad_weight.data() + p * width;
    for (std::size_t l = 0; l < rows; ++l) {
      const double c = grad_gram.at(p, l) + grad_gram.at(l, p);
      if (c == 0.0) continue;
      const double* wl = weight.data() + l * width;
      for (std::size_t k = 0; k < width; ++k) gw[k] += c * wl[k];
    }
  }
}

void fc_current_backward(const FcLayerParams& p, const Tensor& input,
                         const Tensor& grad_current, Tensor& grad_weight,
                         Tensor* grad_input) {
  const std::size_t steps = input.dim(0);
  const std::size_t width = input.size() / steps;
  const std::size_t out = p.weight.dim(0);
  for (std::size_t n = 0; n < steps; ++n) {
    const double* x = input.data() + n * width;
    const double* gi = grad_current.data() + n * out;
    for (std::size_t q = 0; q < out; ++q) {
      const double gq = gi[q];
      if (gq == 0.0) continue;
      double* gw = grad_weight.data() + q * width;
      const double* w = p.weight.data() + q * width;
      for (std::size_t c = 0; c < width; ++c) gw[c] += gq * x[c];
      if (grad_input) {
        double* gx = grad_input->data() + n * width;
        for (std::size_t c = 0; c < width; ++c) gx[c] += gq * w[c];
      }
    }
  }
}

void conv_current_backward(const ConvLayerParams& p, const Tensor& input,
                           const Tensor& grad_current, Tensor& grad_kernels,
                           Tensor* grad_input) {
  const auto geo = net::detail::conv_geometry(p, input);
  const Tensor taps = net::detail::kernels_to_tap_major(p.kernels);
  Tensor grad_taps(taps.shape());
  const std::size_t ci = geo.in_channels, co = geo.out_channels;
  for (std::size_t n = 0; n < geo.steps; ++n) {
    for (std::size_t f = 0; f < geo.bins; ++f) {
      const double* gi = &grad_current.at(n, f, 0);
      bool any = false;
      for (std::size_t q = 0; q < co && !any; ++q) any = gi[q] != 0.0;
      if (!any) continue;
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
          double* gk = &grad_taps.at(a, b, 0, 0);
          double* gx = grad_input ? &grad_input->at(tin, static_cast<std::size_t>(fin), 0)
                                  : nullptr;
          for (std::size_t c = 0; c < ci; ++c) {
            const double xv = x[c];
            if (xv != 0.0) {
              double* gkc = gk + c * co;
              for (std::size_t q = 0; q < co; ++q) gkc[q] += gi[q] * xv;
            }
            if (gx) {
              const double* kc = k + c * co;
              double acc = 0.0;
              for (std::size_t q = 0; q < co; ++q) acc += kc[q] * gi[q];
              gx[c] += acc;
            }
          }
        }
      }
    }
  }
  const Tensor gk = net::detail::kernels_from_tap_major(
      grad_taps, co, ci, geo.kernel_t, geo.kernel_f);
  for (std::size_t i = 0; i < gk.size(); ++i) grad_kernels[i] += gk[i];
}

}  // namespace

ExampleLoss backward(const NetworkParams& params, const NetworkOutput& output,
                     int label, const LossSpec& loss, NetworkParams& grads,
                     double weight) {
  const std::size_t layers = params.layers.size();
  if (output.traces.size() != layers || output.logits.empty()) {
    throw UsageError("backward: forward traces missing or incomplete");
  }
  for (const auto& t : output.traces) {
    if (t.spikes.empty() || t.potential.empty() || t.current.empty()) {
      throw UsageError("backward: forward traces missing or incomplete");
    }
  }
  if (layers == 0) throw UsageError("backward: network has no spiking layers");
  const ExampleLoss value = example_loss(output, label, loss);

  // Readout: logits = W mean_n(s[n]) + bias.
  std::vector<double> glogit = softmax(output.logits);
  glogit[static_cast<std::size_t>(label)] -= 1.0;
  for (double& gk : glogit) gk *= weight;

  const Tensor& last = output.traces.back().spikes;
  const std::size_t steps = last.dim(0);
  const std::size_t width = last.size() / steps;
  std::vector<double> mean(width, 0.0);
  for (std::size_t n = 0; n < steps; ++n)
    for (std::size_t j = 0; j < width; ++j) mean[j] += last[n * width + j];
  for (double& m : mean) m /= static_cast<double>(steps);

  const Tensor& rw = params.readout.weight;
  std::vector<double> g_mean(width, 0.0);
  for (std::size_t k = 0; k < glogit.size(); ++k) {
    grads.readout.bias[k] += glogit[k];
    double* gw = grads.readout.weight.data() + k * width;
    const double* w = rw.data() + k * width;
    for (std::size_t j = 0; j < width; ++j) {
      gw[j] += glogit[k] * mean[j];
      g_mean[j] += glogit[k] * w[j];
    }
  }

  Tensor grad_spikes(last.shape());
  for (std::size_t n = 0; n < steps; ++n)
    for (std::size_t j = 0; j < width; ++j)
      grad_spikes[n * width + j] = g_mean[j] / static_cast<double>(steps);

  for (std::size_t l = layers; l-- > 0;) {
    const LayerTrace& t = output.traces[l];
    const double reg = weight * loss.layer_coeff(l, layers) /
                       static_cast<double>(t.spikes.size());
    if (reg != 0.0) {
      for (std::size_t i = 0; i < grad_spikes.size(); ++i) {
        grad_spikes[i] += reg * t.spikes[i];
      }
    }
    Tensor grad_input;
    Tensor* grad_input_ptr = nullptr;
    if (l > 0) {
      grad_input = Tensor(t.input.shape());
      grad_input_ptr = &grad_input;
    }
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          auto& gp = std::get<T>(grads.layers[l]);
          const CellGrads cg =
              cell_backward(t, p.beta, p.threshold, p.lateral, grad_spikes);
          gp.beta += cg.beta;
          for (std::size_t q = 0; q < cg.threshold.size(); ++q) {
            gp.threshold[q] += cg.threshold[q];
          }
          if constexpr (std::is_same_v<T, FcLayerParams>) {
            fc_current_backward(p, t.input, cg.current, gp.weight, grad_input_ptr);
            gram_backward(p.weight, cg.coupling, gp.weight);
          } else {
            conv_current_backward(p, t.input, cg.current, gp.kernels, grad_input_ptr);
            gram_backward(p.kernels, cg.coupling, gp.kernels);
          }
        },
        params.layers[l]);
    if (l > 0) grad_spikes = Tensor(output.traces[l - 1].spikes.shape(), grad_input.storage());
  }
  return value;
}

BatchResult bptt_gradients(const NetworkParams& params,
                           std::span<const LabeledExample* const> batch,
                           const LossSpec& loss,
                           const net::ForwardOptions& options,
                           unsigned threads) {
  if (batch.empty()) throw ParameterError("bptt_gradients: empty batch");
  const std::size_t items = batch.size();
  const double weight = 1.0 / static_cast<double>(items);

  struct ItemResult {
    NetworkParams grads;
    double loss = 0.0;
    bool correct = false;
    std::vector<double> counts;
    std::vector<std::size_t> neurons;
    std::size_t steps = 0;
    std::exception_ptr error;
  };
  std::vector<ItemResult> results(items);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ItemResult& r = results[i];
      try {
        const NetworkOutput out = net::network_forward(params, batch[i]->features, options);
        r.grads = zeros_like(params);
        r.loss = backward(params, out, batch[i]->label, loss, r.grads, weight).total;
        const auto top = std::max_element(out.logits.begin(), out.logits.end());
        r.correct = (top - out.logits.begin()) == batch[i]->label;
        r.counts = out.spike_counts;
        r.neurons = out.neurons;
        r.steps = out.steps;
      } catch (...) {
        r.error = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, items);
  if (workers == 1) {
    work(0, items);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (items + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(items, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  BatchResult out;
  out.grads = zeros_like(params);
  auto total = detail::parameter_spans(out.grads);
  for (ItemResult& r : results) {
    if (r.error) std::rethrow_exception(r.error);
    out.loss += r.loss * weight;
    out.correct += r.correct ? 1 : 0;
    if (out.spike_counts.empty()) {
      out.spike_counts.assign(r.counts.size(), 0.0);
      out.neurons = r.neurons;
      out.steps = r.steps;
    }
    for (std::size_t l = 0; l < r.counts.size(); ++l) out.spike_counts[l] += r.counts[l];
    const auto item = detail::parameter_spans(r.grads);
    for (std::size_t s = 0; s < total.size(); ++s) {
      for (std::size_t k = 0; k < total[s].values.size(); ++k) {
        total[s].values[k] += item[s].values[k];
      }
    }
  }
  return out;
}

}  // namespace deltaspike::learn
