// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "deltaspike/learn.hpp"
#include "params.hpp"

namespace deltaspike::learn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

struct Instance {
  net::NetworkParams params;
  Tensor input;
  int label = 0;
};

/// Random two-layer network: fc->fc, conv->fc or conv->conv, lateral resets
/// drawn per instance, total spiking neurons <= max_neurons.
Instance random_instance(std::mt19937_64& rng, const GradcheckOptions& opt) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t budget = std::max<std::size_t>(opt.max_neurons, 4);
  const std::size_t steps = pick(std::min<std::size_t>(4, opt.max_steps), opt.max_steps);
  const std::size_t n_classes = 3;
  const int topology = static_cast<int>(pick(0, 2));

  auto fill = [&](Tensor& t, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    for (double& v : t.storage()) v = g(rng);
  };

  Instance inst;
  const std::size_t width_in = pick(2, 5);
  auto cell = [&](auto& layer, std::size_t out) {
    layer.beta = uniform(0.3, 0.9);
    layer.threshold.resize(out);
    for (double& b : layer.threshold) b = uniform(0.2, 1.2);
    layer.lateral = unit(rng) < 0.5;
  };

  std::size_t readout_in = 0;
  if (topology == 0) {
    const std::size_t n1 = pick(2, budget / 2);
    const std::size_t n2 = pick(2, budget - n1);
    inst.input = Tensor({steps, width_in});
    fill(inst.input, 1.0);
    net::FcLayerParams a, b;
    a.weight = Tensor({n1, width_in});
    fill(a.weight, 1.0 / std::sqrt(static_cast<double>(width_in)));
    cell(a, n1);
    b.weight = Tensor({n2, n1});
    fill(b.weight, 1.0 / std::sqrt(static_cast<double>(n1)));
    cell(b, n2);
    inst.params.layers = {a, b};
    readout_in = n2;
  } else {
    const std::size_t bins = pick(2, 4);
    const std::size_t c_in = pick(1, 2);
    const std::size_t c1 = std::max<std::size_t>(1, std::min<std::size_t>(pick(1, 3), budget / (2 * bins)));
    inst.input = Tensor({steps, bins, c_in});
    fill(inst.input, 1.0);
    net::ConvLayerParams a;
    const std::size_t kt = pick(1, 3), kf = std::min<std::size_t>(bins, pick(1, 2));
    a.kernels = Tensor({c1, c_in, kt, kf});
    fill(a.kernels, 1.0 / std::sqrt(static_cast<double>(c_in * kt * kf)));
    a.dilation_t = pick(1, 2);
    a.dilation_f = (kf - 1) * 2 + 1 <= bins ? pick(1, 2) : 1;
    cell(a, c1);
    if (topology == 1) {
      const std::size_t n2 = pick(2, std::max<std::size_t>(2, budget - bins * c1));
      net::FcLayerParams b;
      b.weight = Tensor({n2, bins * c1});
      fill(b.weight, 1.0 / std::sqrt(static_cast<double>(bins * c1)));
      cell(b, n2);
      inst.params.layers = {a, b};
      readout_in = n2;
    } else {
      const std::size_t c2 = std::max<std::size_t>(1, std::min<std::size_t>(pick(1, 3), (budget - bins * c1) / bins));
      net::ConvLayerParams b;
      const std::size_t kt2 = pick(1, 2), kf2 = std::min<std::size_t>(bins, pick(1, 3));
      b.kernels = Tensor({c2, c1, kt2, kf2});
      fill(b.kernels, 1.0 / std::sqrt(static_cast<double>(c1 * kt2 * kf2)));
      b.dilation_t = pick(1, 2);
      b.dilation_f = (kf2 - 1) * 2 + 1 <= bins ? pick(1, 2) : 1;
      cell(b, c2);
      inst.params.layers = {a, b};
      readout_in = bins * c2;
    }
  }
  inst.params.readout.weight = Tensor({n_classes, readout_in});
  fill(inst.params.readout.weight, 1.0);
  inst.params.readout.bias.resize(n_classes);
  for (double& v : inst.params.readout.bias) v = uniform(-0.5, 0.5);
  inst.label = static_cast<int>(pick(0, n_classes - 1));
  return inst;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  const net::ForwardOptions forward{net::SpikeMode::kRelaxed, opt.sigma};
  const LossSpec loss{0.1};

  std::map<ParamKind, double> worst;
  GradcheckReport report;
  for (std::size_t i = 0; i < opt.instances; ++i) {
    Instance inst = random_instance(rng, opt);
    auto total_loss = [&]() {
      const auto out = net::network_forward(inst.params, inst.input, forward);
      return example_loss(out, inst.label, loss).total;
    };

    net::NetworkParams grads = zeros_like(inst.params);
    backward(inst.params, net::network_forward(inst.params, inst.input, forward),
             inst.label, loss, grads);

    auto p_slots = detail::parameter_spans(inst.params);
    const auto g_slots = detail::parameter_spans(grads);
    for (std::size_t s = 0; s < p_slots.size(); ++s) {
      for (std::size_t k = 0; k < p_slots[s].values.size(); ++k) {
        double& p = p_slots[s].values[k];
        const double saved = p;
        // Fourth-order central stencil: the normalized threshold makes the
        // loss sharply curved along small-norm weight rows.
        const double h = opt.fd_step;
        auto at = [&](double offset) {
          p = saved + offset;
          return total_loss();
        };
        const double d1 = at(h) - at(-h);
        const double d2 = at(2.0 * h) - at(-2.0 * h);
        p = saved;
        const double numeric = (8.0 * d1 - d2) / (12.0 * h);
        double analytic = g_slots[s].values[k];
        if (opt.corrupt_backward && p_slots[s].kind == ParamKind::kWeight) {
          analytic *= 1.1;
        }
        const double err = relative_error(analytic, numeric);
        double& w = worst[p_slots[s].kind];
        w = std::max(w, err);
        report.worst_relative_error = std::max(report.worst_relative_error, err);
        ++report.checked;
      }
    }
  }
  for (const auto& [kind, err] : worst) report.worst_by_kind.emplace_back(kind, err);
  report.passed = report.checked > 0 && report.worst_relative_error < opt.tolerance;
  return report;
}

}  // namespace deltaspike::learn
