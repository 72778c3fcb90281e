#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "deltaspike/error.hpp"
#include "deltaspike/net.hpp"
#include "signals.hpp"

using namespace deltaspike;
using namespace deltaspike::net;

namespace {

Tensor spike_input(std::mt19937_64& rng, std::vector<std::size_t> shape, double rate) {
  Tensor x(std::move(shape));
  std::bernoulli_distribution b(rate);
  for (double& v : x.storage()) v = b(rng) ? 1.0 : 0.0;
  return x;
}

FcLayerParams random_fc(std::mt19937_64& rng, std::size_t out, std::size_t in,
                        bool lateral) {
  FcLayerParams p;
  p.weight = testing::random_matrix(rng, out, in, 0.5);
  p.beta = 0.7;
  p.threshold.assign(out, 0.3);
  p.lateral = lateral;
  return p;
}

// Dense-algebra evaluation of the cell recurrence with previous-step resets.
std::pair<Tensor, Tensor> brute_force_fc(const FcLayerParams& p, const Tensor& x) {
  const std::size_t steps = x.dim(0), in = x.dim(1), out = p.weight.dim(0);
  Tensor u({steps, out}), s({steps, out});
  std::vector<double> u_prev(out, 0.0), s_prev(out, 0.0);
  for (std::size_t n = 0; n < steps; ++n) {
    for (std::size_t i = 0; i < out; ++i) {
      double current = 0.0, reset = 0.0;
      for (std::size_t j = 0; j < in; ++j) current += p.weight.at(i, j) * x.at(n, j);
      for (std::size_t l = 0; l < out; ++l) {
        if (!p.lateral && l != i) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < in; ++j) dot += p.weight.at(i, j) * p.weight.at(l, j);
        reset += dot * s_prev[l];
      }
      u.at(n, i) = p.beta * (u_prev[i] - reset) + (1.0 - p.beta) * current;
    }
    for (std::size_t i = 0; i < out; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < in; ++j) norm += p.weight.at(i, j) * p.weight.at(i, j);
      s.at(n, i) = u.at(n, i) / (norm + 1e-8) >= p.threshold[i] ? 1.0 : 0.0;
      u_prev[i] = u.at(n, i);
      s_prev[i] = s.at(n, i);
    }
  }
  return {u, s};
}

// Direct dilated convolution with causal time and centered frequency padding.
Tensor naive_conv_current(const ConvLayerParams& p, const Tensor& x) {
  const std::size_t T = x.dim(0), F = x.dim(1), ci = x.dim(2);
  const std::size_t co = p.out_channels(), H = p.kernel_t(), W = p.kernel_f();
  const long pad = static_cast<long>((W - 1) * p.dilation_f / 2);
  Tensor out({T, F, co});
  for (std::size_t n = 0; n < T; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t q = 0; q < co; ++q) {
        double acc = 0.0;
        for (std::size_t a = 0; a < H; ++a) {
          const long t_in = static_cast<long>(n) - static_cast<long>((H - 1 - a) * p.dilation_t);
          if (t_in < 0) continue;
          for (std::size_t b = 0; b < W; ++b) {
            const long f_in = static_cast<long>(f + b * p.dilation_f) - pad;
            if (f_in < 0 || f_in >= static_cast<long>(F)) continue;
            for (std::size_t c = 0; c < ci; ++c) {
              acc += p.kernels.at(q, c, a, b) * x.at(static_cast<std::size_t>(t_in),
                                                    static_cast<std::size_t>(f_in), c);
            }
          }
        }
        out.at(n, f, q) = acc;
      }
  return out;
}

ConvLayerParams random_conv(std::mt19937_64& rng, std::size_t co, std::size_t ci,
                            std::size_t h, std::size_t w, std::size_t dt,
                            std::size_t df, bool lateral) {
  ConvLayerParams p;
  p.kernels = Tensor({co, ci, h, w});
  std::normal_distribution<double> g(0.0, 0.4);
  for (double& v : p.kernels.storage()) v = g(rng);
  p.beta = 0.6;
  p.threshold.assign(co, 0.25);
  p.dilation_t = dt;
  p.dilation_f = df;
  p.lateral = lateral;
  return p;
}

bool is_binary(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](double v) { return v == 0.0 || v == 1.0; });
}

}  // namespace

TEST_CASE("fc layer: hand-traced single neuron") {
  FcLayerParams p;
  p.weight = Tensor({1, 1}, {2.0});
  p.beta = 0.5;
  p.threshold = {0.4};
  const Tensor x({5, 1}, {1, 1, 1, 0, 0});
  const LayerTrace t = fc_spiking_forward(p, x);
  CHECK(t.potential[0] == 1.0);
  CHECK(t.potential[1] == 1.5);
  CHECK(t.potential[2] == 1.75);
  CHECK(t.potential[3] == -1.125);
  CHECK(t.spikes.storage() == std::vector<double>{0, 0, 1, 0, 0});
  CHECK(t.potential[0] / t.normalizer(0) == doctest::Approx(0.25));
  CHECK(t.potential[2] / t.normalizer(0) == doctest::Approx(0.4375));
}

TEST_CASE("fc layer: zero weights stay silent") {
  std::mt19937_64 rng(1);
  FcLayerParams p;
  p.weight = Tensor({3, 4});
  p.threshold.assign(3, 0.5);
  const LayerTrace t = fc_spiking_forward(p, testing::random_matrix(rng, 10, 4));
  CHECK(std::all_of(t.potential.values().begin(), t.potential.values().end(),
                    [](double v) { return v == 0.0; }));
  CHECK(std::all_of(t.spikes.values().begin(), t.spikes.values().end(),
                    [](double v) { return v == 0.0; }));
}

TEST_CASE("fc layer: identical rows reset each other by beta * ||W||^2") {
  FcLayerParams p;
  p.weight = Tensor({2, 2}, {1.0, 0.5, 1.0, 0.5});
  p.beta = 0.5;
  p.threshold = {0.1, 100.0};  // only neuron 0 can fire
  const Tensor x({4, 2}, {1, 1, 0, 0, 0, 0, 0, 0});
  const LayerTrace t = fc_spiking_forward(p, x);
  REQUIRE(t.spikes.at(0, 0) == 1.0);
  REQUIRE(t.spikes.at(0, 1) == 0.0);
  const double norm2 = 1.25;
  for (std::size_t i = 0; i < 2; ++i) {
    const double undisturbed = p.beta * t.potential.at(0, i);
    CHECK(t.potential.at(1, i) == doctest::Approx(undisturbed - p.beta * norm2).epsilon(1e-14));
  }
  FcLayerParams solo = p;
  solo.lateral = false;
  const LayerTrace ts = fc_spiking_forward(solo, x);
  CHECK(ts.potential.at(1, 0) == doctest::Approx(t.potential.at(1, 0)));
  CHECK(ts.potential.at(1, 1) == doctest::Approx(p.beta * ts.potential.at(0, 1)));
}

TEST_CASE("fc layer: matches dense-algebra brute force") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const bool lateral = trial % 2 == 0;
    const FcLayerParams p = random_fc(rng, 2 + rng() % 7, 1 + rng() % 6, lateral);
    const Tensor x = trial % 3 == 0 ? testing::random_matrix(rng, 25, p.weight.dim(1))
                                    : spike_input(rng, {25, p.weight.dim(1)}, 0.4);
    const LayerTrace t = fc_spiking_forward(p, x);
    const auto [u, s] = brute_force_fc(p, x);
    for (std::size_t k = 0; k < u.size(); ++k) {
      CHECK(std::abs(t.potential[k] - u[k]) <= 1e-9 * std::max(1.0, std::abs(u[k])));
    }
    CHECK(t.spikes == s);
    CHECK(is_binary(t.spikes));
  }
}

TEST_CASE("fc layer: normalizer tracks the current weights") {
  std::mt19937_64 rng(6);
  FcLayerParams p = random_fc(rng, 3, 5, true);
  const Tensor x = testing::random_matrix(rng, 6, 5);
  for (double scale : {1.0, 3.0}) {
    for (std::size_t j = 0; j < 5; ++j) p.weight.at(1, j) *= scale;
    const LayerTrace t = fc_spiking_forward(p, x);
    for (std::size_t i = 0; i < 3; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < 5; ++j) norm += p.weight.at(i, j) * p.weight.at(i, j);
      CHECK(t.normalizer(i) == doctest::Approx(norm + 1e-8).epsilon(1e-14));
    }
  }
}

TEST_CASE("fc layer: errors") {
  std::mt19937_64 rng(2);
  FcLayerParams p = random_fc(rng, 2, 3, true);
  CHECK_THROWS_AS(fc_spiking_forward(p, Tensor({4, 2})), ParameterError);
  Tensor bad({2, 3});
  bad.at(1, 2) = NAN;
  CHECK_THROWS_AS(fc_spiking_forward(p, bad), DataError);
  p.beta = 1.5;
  CHECK_THROWS_AS(fc_spiking_forward(p, Tensor({2, 3})), ParameterError);
}

TEST_CASE("causality: future inputs never change past outputs") {
  std::mt19937_64 rng(8);
  const FcLayerParams fc = random_fc(rng, 5, 4, true);
  const ConvLayerParams conv = random_conv(rng, 4, 2, 3, 3, 2, 2, true);
  const Tensor x_fc = testing::random_matrix(rng, 30, 4);
  Tensor x_conv = spike_input(rng, {30, 8, 2}, 0.5);
  for (std::size_t cut : {5u, 13u, 29u}) {
    Tensor fc_cut = x_fc, conv_cut = x_conv;
    for (std::size_t k = cut * 4; k < fc_cut.size(); ++k) fc_cut[k] = 0.0;
    for (std::size_t k = cut * 16; k < conv_cut.size(); ++k) conv_cut[k] = 0.0;
    const auto a = fc_spiking_forward(fc, x_fc), b = fc_spiking_forward(fc, fc_cut);
    CHECK(std::equal(a.spikes.data(), a.spikes.data() + cut * 5, b.spikes.data()));
    CHECK(std::equal(a.potential.data(), a.potential.data() + cut * 5, b.potential.data()));
    const auto c = conv_spiking_forward(conv, x_conv), d = conv_spiking_forward(conv, conv_cut);
    CHECK(std::equal(c.spikes.data(), c.spikes.data() + cut * 32, d.spikes.data()));
    CHECK(std::equal(c.potential.data(), c.potential.data() + cut * 32, d.potential.data()));
  }
}

TEST_CASE("conv layer: 1x1 kernels equal a per-position fc layer bit-exactly") {
  std::mt19937_64 rng(9);
  for (bool lateral : {true, false}) {
    const ConvLayerParams conv = random_conv(rng, 5, 3, 1, 1, 1, 1, lateral);
    const Tensor x = spike_input(rng, {20, 6, 3}, 0.5);
    const LayerTrace tc = conv_spiking_forward(conv, x);
    FcLayerParams fc;
    fc.weight = Tensor({5, 3}, conv.kernels.storage());
    fc.beta = conv.beta;
    fc.threshold = conv.threshold;
    fc.lateral = lateral;
    for (std::size_t f = 0; f < 6; ++f) {
      Tensor xf({20, 3});
      for (std::size_t n = 0; n < 20; ++n)
        for (std::size_t c = 0; c < 3; ++c) xf.at(n, c) = x.at(n, f, c);
      const LayerTrace tf = fc_spiking_forward(fc, xf);
      for (std::size_t n = 0; n < 20; ++n)
        for (std::size_t q = 0; q < 5; ++q) {
          CHECK(tc.spikes.at(n, f, q) == tf.spikes.at(n, q));
          CHECK(tc.potential.at(n, f, q) == tf.potential.at(n, q));
        }
    }
  }
}

TEST_CASE("conv layer: current matches a direct dilated convolution") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 1 + rng() % 4, w = 1 + rng() % 3;
    const std::size_t df = 1 + rng() % 3;
    const ConvLayerParams p = random_conv(rng, 3, 2, h, w, 1 + rng() % 3, df, true);
    const Tensor x = spike_input(rng, {15, 9, 2}, 0.4);
    const LayerTrace t = conv_spiking_forward(p, x);
    const Tensor ref = naive_conv_current(p, x);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(t.current[k] == doctest::Approx(ref[k]).epsilon(1e-12));
    }
    CHECK(is_binary(t.spikes));
  }
}

TEST_CASE("conv layer: lateral reset couples channels at one position only") {
  ConvLayerParams p;
  p.kernels = Tensor({2, 1, 1, 1}, {1.0, 2.0});
  p.beta = 0.5;
  p.threshold = {0.1, 100.0};
  Tensor x({3, 2, 1});
  x.at(0, 0, 0) = 1.0;  // drives position 0 only
  const LayerTrace t = conv_spiking_forward(p, x);
  REQUIRE(t.spikes.at(0, 0, 0) == 1.0);
  CHECK(t.reset.at(1, 0, 0) == 1.0);
  CHECK(t.reset.at(1, 0, 1) == 2.0);  // <W_1, W_0>
  CHECK(t.reset.at(1, 1, 0) == 0.0);
  CHECK(t.reset.at(1, 1, 1) == 0.0);
}

TEST_CASE("conv layer: zero kernels are silent and bad geometry is rejected") {
  ConvLayerParams p;
  p.kernels = Tensor({4, 2, 3, 3});
  p.threshold.assign(4, 0.5);
  std::mt19937_64 rng(3);
  const LayerTrace t = conv_spiking_forward(p, spike_input(rng, {10, 5, 2}, 0.5));
  CHECK(std::all_of(t.spikes.values().begin(), t.spikes.values().end(),
                    [](double v) { return v == 0.0; }));
  p.dilation_f = 3;  // spans 7 bins
  CHECK_THROWS_AS(conv_spiking_forward(p, Tensor({10, 5, 2})), ParameterError);
  p.dilation_f = 2;
  CHECK_NOTHROW(conv_spiking_forward(p, Tensor({10, 5, 2})));
  CHECK_THROWS_AS(conv_spiking_forward(p, Tensor({10, 5, 3})), ParameterError);
  p.threshold.pop_back();
  CHECK_THROWS_AS(conv_spiking_forward(p, Tensor({10, 5, 2})), ParameterError);
}

TEST_CASE("readout: mean over time") {
  ReadoutParams r;
  r.weight = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  r.bias = {0.5, -0.5};
  CHECK(readout_forward(r, Tensor({4, 3})) == r.bias);
  Tensor one({4, 3});
  one.at(2, 1) = 1.0;
  const auto logits = readout_forward(r, one);
  CHECK(logits[0] == doctest::Approx(0.5 + 2.0 / 4));
  CHECK(logits[1] == doctest::Approx(-0.5 + 5.0 / 4));

  std::mt19937_64 rng(4);
  const Tensor s = spike_input(rng, {10, 3}, 0.5);
  Tensor rev({10, 3});
  for (std::size_t n = 0; n < 10; ++n)
    for (std::size_t j = 0; j < 3; ++j) rev.at(n, j) = s.at(9 - n, j);
  const auto a = readout_forward(r, s), b = readout_forward(r, rev);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-14));
  CHECK_THROWS_AS(readout_forward(r, Tensor({4, 2})), ParameterError);
}

TEST_CASE("network: zero weights give bias logits and zero rates") {
  ModelConfig cfg;
  cfg.input_steps = 12;
  cfg.input_bins = 6;
  cfg.input_channels = 2;
  cfg.n_classes = 3;
  cfg.layers = {{LayerSpec::Kind::kConv, 4, 2, 3, 1, 1}, {LayerSpec::Kind::kFc, 5}};
  NetworkParams p = init_network(cfg, 1);
  std::get<ConvLayerParams>(p.layers[0]).kernels.fill(0.0);
  std::get<FcLayerParams>(p.layers[1]).weight.fill(0.0);
  p.readout.weight.fill(0.0);
  p.readout.bias = {0.1, 0.2, 0.3};
  std::mt19937_64 rng(5);
  const Tensor x({12, 6, 2}, testing::random_matrix(rng, 12, 12).storage());
  const auto out = network_forward(p, x);
  CHECK(out.logits == p.readout.bias);
  CHECK(out.firing_rate_hz(0) == 0.0);
  CHECK(out.firing_rate_hz(1) == 0.0);
  CHECK(out.neurons == std::vector<std::size_t>{24, 5});
}

TEST_CASE("network: firing-rate bookkeeping") {
  NetworkOutput out;
  out.spike_counts = {1.0};
  out.neurons = {7};
  out.steps = 20;
  CHECK(out.firing_rate_hz(0) == doctest::Approx(1.0 / (7 * 20 * 0.01)));
}

TEST_CASE("network: reference architecture shapes") {
  const ModelConfig cfg = ModelConfig::speech_commands();
  CHECK(readout_inputs(cfg) == 40 * 64);
  const NetworkParams p = init_network(cfg, 7);
  REQUIRE(p.layers.size() == 3);
  const auto& last = std::get<ConvLayerParams>(p.layers[2]);
  CHECK(last.dilation_t == 16);
  CHECK(last.dilation_f == 9);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Tensor x({98, 40, 3});
  for (double& v : x.storage()) v = g(rng);
  const auto out = network_forward(p, x);
  for (const LayerTrace& t : out.traces) {
    CHECK(t.spikes.shape() == std::vector<std::size_t>{98, 40, 64});
    CHECK(is_binary(t.spikes));
  }
  CHECK(out.logits.size() == 12);
  // Freshly initialized layers are neither dead nor saturated.
  for (std::size_t l = 0; l < 3; ++l) {
    const double per_step = out.spike_counts[l] / (out.neurons[l] * 98.0);
    MESSAGE("layer " << l << " spikes/neuron/step " << per_step);
    CHECK(per_step > 0.0);
    CHECK(per_step < 0.5);
  }
}

TEST_CASE("model config JSON round trip and init determinism") {
  ModelConfig cfg = ModelConfig::speech_commands();
  cfg.lateral = false;
  cfg.n_classes = 4;
  CHECK(model_config_from_json(to_json(cfg)) == cfg);
  cfg.input_bins = 16;
  cfg.layers = {{LayerSpec::Kind::kConv, 8, 2, 3, 1, 1}};
  const auto a = init_network(cfg, 3), b = init_network(cfg, 3), c = init_network(cfg, 4);
  CHECK(std::get<ConvLayerParams>(a.layers[0]).kernels ==
        std::get<ConvLayerParams>(b.layers[0]).kernels);
  CHECK(std::get<ConvLayerParams>(a.layers[0]).kernels !=
        std::get<ConvLayerParams>(c.layers[0]).kernels);
  const auto& k = std::get<ConvLayerParams>(a.layers[0]).kernels;
  const double bound = cfg.init_gain / std::sqrt(3.0 * 2 * 3);
  CHECK(std::all_of(k.values().begin(), k.values().end(),
                    [&](double v) { return std::abs(v) <= bound; }));
  CHECK(std::get<ConvLayerParams>(a.layers[0]).beta == doctest::Approx(std::exp(-0.5)));
  CHECK(a.readout.bias == std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(model_config_from_json("{\"layers\": 3}"), DataError);
}
