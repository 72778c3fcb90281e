// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "deltaspike/error.hpp"
#include "deltaspike/features.hpp"

namespace deltaspike::features {

namespace {

Tensor render_example(const SyntheticConfig& cfg, std::size_t cls, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double k = static_cast<double>(cls);
  const double n = static_cast<double>(cfg.n_classes);
  const double bins = static_cast<double>(cfg.bins);
  // Class band centers spread over the frequency axis; periods cycle so that
  // neighbouring bands also differ in rhythm.
  const double center = (k + 0.5) / n * bins + (unit(rng) - 0.5) * 0.5 * bins / n;
  const double period = 5.0 + 3.0 * static_cast<double>(cls % 3);
  const double onset = unit(rng) * period;
  const double amplitude = 0.7 + 0.6 * unit(rng);
  const double width_t = 1.5, width_f = std::max(1.0, 0.35 * bins / n);

  Tensor base({cfg.steps, cfg.bins});
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    for (std::size_t f = 0; f < cfg.bins; ++f) {
      const double df = (static_cast<double>(f) - center) / width_f;
      double v = 0.0;
      for (double c = onset; c < static_cast<double>(cfg.steps) + 3.0 * width_t; c += period) {
        const double dt = (static_cast<double>(t) - c) / width_t;
        v += std::exp(-0.5 * (dt * dt + df * df));
      }
      base.at(t, f) = amplitude * v + cfg.noise * gauss(rng);
    }
  }

  Tensor out({cfg.steps, cfg.bins, cfg.channels});
  std::vector<double> column(cfg.steps);
  for (std::size_t f = 0; f < cfg.bins; ++f) {
    for (std::size_t t = 0; t < cfg.steps; ++t) column[t] = base.at(t, f);
    std::vector<double> d = column;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      if (c > 0) d = delta_features(d, 1);
      for (std::size_t t = 0; t < cfg.steps; ++t) out.at(t, f, c) = d[t];
    }
  }
  return out;
}

}  // namespace

DatasetSplits synthetic_dataset(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.n_classes < 2) throw ParameterError("synthetic: need >= 2 classes");
  if (cfg.steps < 3 || cfg.bins == 0 || cfg.channels == 0 || cfg.channels > 3) {
    throw ParameterError("synthetic: need steps >= 3, bins >= 1, 1 <= channels <= 3");
  }
  if (!(cfg.noise >= 0.0)) throw ParameterError("synthetic: noise must be >= 0");
  if (!(cfg.train_fraction > 0.0 && cfg.validation_fraction >= 0.0 &&
        cfg.train_fraction + cfg.validation_fraction <= 1.0)) {
    throw ParameterError("synthetic: invalid split fractions");
  }

  std::mt19937_64 rng(seed);
  std::vector<LabeledExample> all;
  all.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    const std::size_t cls = i % cfg.n_classes;
    all.push_back({render_example(cfg, cls, rng), static_cast<int>(cls),
                   "synthetic:" + std::to_string(i)});
  }
  std::shuffle(all.begin(), all.end(), rng);

  DatasetSplits splits;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    splits.class_names.push_back("class" + std::to_string(c));
  }
  const auto n_train = static_cast<std::size_t>(
      std::round(cfg.train_fraction * static_cast<double>(all.size())));
  const auto n_val = static_cast<std::size_t>(
      std::round(cfg.validation_fraction * static_cast<double>(all.size())));
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& dst = i < n_train ? splits.train
                : i < n_train + n_val ? splits.validation
                                      : splits.test;
    dst.push_back(std::move(all[i]));
  }
  if (!splits.train.empty()) {
    const Normalizer norm = Normalizer::fit(splits.train);
    norm.apply(splits.train);
    norm.apply(splits.validation);
    norm.apply(splits.test);
  }
  return splits;
}

}  // namespace deltaspike::features
