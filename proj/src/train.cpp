// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "deltaspike/learn.hpp"
#include "params.hpp"

namespace deltaspike::learn {

void clamp_parameters(net::NetworkParams& params) {
  for (auto& layer : params.layers) {
    std::visit(
        [](auto& p) {
          p.beta = std::clamp(p.beta, 0.0, 1.0);
          for (double& b : p.threshold) b = std::max(b, 0.0);
        },
        layer);
  }
}

double scheduled_lr(const TrainConfig& cfg, std::uint64_t step,
                    std::size_t steps_per_epoch) {
  const std::uint64_t warmup = cfg.warmup_epochs * steps_per_epoch;
  if (warmup == 0 || step >= warmup) return cfg.lr;
  return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

void optimizer_step(net::NetworkParams& params, const net::NetworkParams& grads,
                    const TrainConfig& cfg, OptimizerState& state, double lr) {
  auto p_slots = detail::parameter_spans(params);
  const auto g_slots = detail::parameter_spans(grads);
  if (p_slots.size() != g_slots.size()) {
    throw ParameterError("optimizer_step: parameter/gradient structure mismatch");
  }
  if (state.m.empty()) {
    for (const auto& s : p_slots) {
      state.m.emplace_back(s.values.size(), 0.0);
      state.v.emplace_back(s.values.size(), 0.0);
    }
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double t = static_cast<double>(++state.step);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * std::pow(b2, t) / bc2;
  const bool rectified = rho_t > 5.0;
  const double rect =
      rectified ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                            ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                : 0.0;

  for (std::size_t s = 0; s < p_slots.size(); ++s) {
    auto values = p_slots[s].values;
    const auto g = g_slots[s].values;
    if (values.size() != g.size()) {
      throw ParameterError("optimizer_step: shape mismatch for " + p_slots[s].name);
    }
    const bool decay = p_slots[s].kind == ParamKind::kWeight ||
                       p_slots[s].kind == ParamKind::kReadoutWeight;
    auto& m = state.m[s];
    auto& v = state.v[s];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double gk = std::clamp(g[k], -cfg.grad_clip, cfg.grad_clip);
      if (decay) values[k] -= lr * cfg.weight_decay * values[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double m_hat = m[k] / bc1;
      if (rectified) {
        values[k] -= lr * rect * m_hat / (std::sqrt(v[k] / bc2) + cfg.adam_eps);
      } else {
        values[k] -= lr * m_hat;
      }
    }
  }
  clamp_parameters(params);
}

namespace {

struct Tally {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
  std::vector<double> spikes;
  std::vector<std::size_t> neurons;
  std::size_t steps = 0;

  void add_counts(const std::vector<double>& c, const std::vector<std::size_t>& n,
                  std::size_t t) {
    if (spikes.empty()) {
      spikes.assign(c.size(), 0.0);
      neurons = n;
      steps = t;
    }
    for (std::size_t l = 0; l < c.size(); ++l) spikes[l] += c[l];
  }

  SplitMetrics finish() const {
    SplitMetrics m;
    if (count == 0) return m;
    m.loss = loss / static_cast<double>(count);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(count);
    double all_spikes = 0.0, all_neurons = 0.0;
    const double seconds = static_cast<double>(steps) * net::kStepSeconds *
                           static_cast<double>(count);
    for (std::size_t l = 0; l < spikes.size(); ++l) {
      m.firing_rate_hz.push_back(spikes[l] / (static_cast<double>(neurons[l]) * seconds));
      all_spikes += spikes[l];
      all_neurons += static_cast<double>(neurons[l]);
    }
    if (all_neurons > 0.0) m.mean_firing_rate_hz = all_spikes / (all_neurons * seconds);
    return m;
  }
};

}  // namespace

SplitMetrics evaluate(const net::NetworkParams& params,
                      std::span<const LabeledExample> examples,
                      const LossSpec& loss, const net::ForwardOptions& options,
                      unsigned threads) {
  struct Item {
    double loss = 0.0;
    bool correct = false;
    std::vector<double> counts;
    std::vector<std::size_t> neurons;
    std::size_t steps = 0;
    std::exception_ptr error;
  };
  std::vector<Item> items(examples.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        const auto out = net::network_forward(params, examples[i].features, options);
        items[i].loss = example_loss(out, examples[i].label, loss).total;
        const auto top = std::max_element(out.logits.begin(), out.logits.end());
        items[i].correct = (top - out.logits.begin()) == examples[i].label;
        items[i].counts = out.spike_counts;
        items[i].neurons = out.neurons;
        items[i].steps = out.steps;
      } catch (...) {
        items[i].error = std::current_exception();
      }
    }
  };
  const std::size_t workers =
      std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, items.size()));
  if (workers <= 1) {
    work(0, items.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (items.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk, end = std::min(items.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  Tally tally;
  for (const Item& it : items) {
    if (it.error) std::rethrow_exception(it.error);
    tally.loss += it.loss;
    tally.correct += it.correct ? 1 : 0;
    ++tally.count;
    tally.add_counts(it.counts, it.neurons, it.steps);
  }
  return tally.finish();
}

std::string metrics_record(std::size_t epoch, const std::string& split,
                           const SplitMetrics& m) {
  nlohmann::json j = {{"epoch", epoch},
                      {"split", split},
                      {"loss", m.loss},
                      {"accuracy", m.accuracy},
                      {"firing_rate_hz", m.firing_rate_hz},
                      {"mean_firing_rate_hz", m.mean_firing_rate_hz}};
  return j.dump();
}

TrainResult train_loop(const DatasetSplits& data, const net::ModelConfig& model,
                       const TrainConfig& cfg, std::uint64_t seed,
                       const EpochCallback& on_epoch) {
  if (data.train.empty()) throw ConfigError("train_loop: empty training set");
  if (cfg.batch_size == 0) throw ConfigError("train_loop: batch_size must be > 0");

  TrainResult result;
  result.params = net::init_network(model, seed);
  const LossSpec loss{cfg.reg_coeff_base};
  const net::ForwardOptions forward{cfg.forward_mode, cfg.sigma};
  const net::ForwardOptions eval_forward{net::SpikeMode::kHard, cfg.sigma};

  std::mt19937_64 shuffler(seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch =
      (order.size() + cfg.batch_size - 1) / cfg.batch_size;

  OptimizerState state;
  std::vector<const LabeledExample*> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    Tally tally;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data.train[order[i]]);

      BatchResult r = bptt_gradients(result.params, batch, loss, forward, cfg.threads);
      if (!std::isfinite(r.loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      }
      const double lr = scheduled_lr(cfg, state.step, steps_per_epoch);
      optimizer_step(result.params, r.grads, cfg, state, lr);
      visit_parameters(result.params, [&](const std::string& name, std::span<double> v,
                                          ParamKind) {
        for (double x : v) {
          if (!std::isfinite(x)) {
            throw DivergenceError("non-finite " + name + " after step " +
                                  std::to_string(state.step) + " (epoch " +
                                  std::to_string(epoch) + ")");
          }
        }
      });

      tally.loss += r.loss * static_cast<double>(batch.size());
      tally.correct += r.correct;
      tally.count += batch.size();
      tally.add_counts(r.spike_counts, r.neurons, r.steps);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train = tally.finish();
    if (!data.validation.empty()) {
      metrics.validation =
          evaluate(result.params, data.validation, loss, eval_forward, cfg.threads);
      if (!std::isfinite(metrics.validation.loss)) {
        throw DivergenceError("non-finite validation loss at epoch " +
                              std::to_string(epoch));
      }
    }
    result.history.push_back(metrics);
    if (on_epoch) on_epoch(metrics, result.params);
  }
  return result;
}

}  // namespace deltaspike::learn
