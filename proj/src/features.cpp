// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/features.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "deltaspike/error.hpp"

namespace deltaspike::features {

namespace {
// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ParameterError("mel: sample_rate must be > 0");
  if (win == 0 || hop == 0) throw ParameterError("mel: win and hop must be > 0");
  if (win < hop) throw ParameterError("mel: win must be >= hop");
  if (n_mels == 0) throw ParameterError("mel: n_mels must be > 0");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw ParameterError("mel: need 0 <= f_min < f_max <= sample_rate / 2");
  }
  if (n_derivatives > 2) throw ParameterError("mel: at most 2 derivative orders");
  if (!(log_floor > 0.0)) throw ParameterError("mel: log_floor must be > 0");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> hz(cfg.n_mels + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                               static_cast<double>(cfg.n_mels + 1));
  }
  hz.front() = cfg.f_min;
  hz.back() = cfg.f_max;
  return hz;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  const std::size_t bins = cfg.n_bins();
  Tensor fb({cfg.n_mels, bins});
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft());
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      fb.at(m, k) = std::max(0.0, w);
    }
  }
  return fb;
}

std::size_t frame_count(std::size_t length, const MelConfig& cfg) {
  if (length < cfg.win) return 0;
  return 1 + (length - cfg.win) / cfg.hop;
}

std::vector<double> delta_features(std::span<const double> x, int order) {
  if (order != 1 && order != 2) throw ParameterError("delta_features: order must be 1 or 2");
  if (x.size() < 3) throw ParameterError("delta_features: need at least 3 samples");
  const std::size_t n = x.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double next = x[i + 1 < n ? i + 1 : n - 1];
    const double prev = x[i > 0 ? i - 1 : 0];
    d[i] = (next - prev) / 2.0;
  }
  if (order == 2) return delta_features(d, 1);
  return d;
}

struct FeatureExtractor::Fft {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit Fft(std::size_t n) {
    std::lock_guard lock(planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

FeatureExtractor::FeatureExtractor(MelConfig cfg)
    : cfg_(cfg), filterbank_(mel_filterbank(cfg)), window_(cfg.win) {
  // Periodic Hann window.
  for (std::size_t i = 0; i < cfg_.win; ++i) {
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(cfg_.win));
  }
  fft_ = std::make_unique<Fft>(cfg_.n_fft());
}

FeatureExtractor::~FeatureExtractor() = default;

Tensor FeatureExtractor::magnitude_stft(std::span<const double> waveform) {
  const std::size_t frames = frame_count(waveform.size(), cfg_);
  if (frames == 0) throw ParameterError("stft: waveform shorter than one window");
  const std::size_t bins = cfg_.n_bins();
  Tensor mag({frames, bins});
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = waveform.data() + t * cfg_.hop;
    for (std::size_t i = 0; i < cfg_.win; ++i) fft_->in[i] = src[i] * window_[i];
    fftw_execute(fft_->plan);
    for (std::size_t k = 0; k < bins; ++k) {
      mag.at(t, k) = std::hypot(fft_->out[k][0], fft_->out[k][1]);
    }
  }
  return mag;
}

Tensor FeatureExtractor::log_mel(std::span<const double> waveform) {
  const Tensor mag = magnitude_stft(waveform);
  const std::size_t frames = mag.dim(0), bins = mag.dim(1);
  Tensor out({frames, cfg_.n_mels});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += filterbank_.at(m, k) * mag.at(t, k);
      out.at(t, m) = std::log(e + cfg_.log_floor);
    }
  }
  return out;
}

Tensor FeatureExtractor::features(std::span<const double> waveform) {
  std::vector<double> padded;
  if (waveform.size() < cfg_.clip_samples) {
    padded.assign(waveform.begin(), waveform.end());
    padded.resize(cfg_.clip_samples, 0.0);
    waveform = padded;
  }
  const Tensor stat = log_mel(waveform);
  const std::size_t frames = stat.dim(0), mels = stat.dim(1);
  const std::size_t channels = 1 + cfg_.n_derivatives;
  Tensor out({frames, mels, channels});
  std::vector<double> column(frames);
  for (std::size_t m = 0; m < mels; ++m) {
    for (std::size_t t = 0; t < frames; ++t) {
      column[t] = stat.at(t, m);
      out.at(t, m, 0) = column[t];
    }
    if (cfg_.n_derivatives == 0) continue;
    if (frames < 3) throw ParameterError("features: need >= 3 frames for derivatives");
    const auto d1 = delta_features(column, 1);
    for (std::size_t t = 0; t < frames; ++t) out.at(t, m, 1) = d1[t];
    if (cfg_.n_derivatives == 2) {
      const auto d2 = delta_features(d1, 1);
      for (std::size_t t = 0; t < frames; ++t) out.at(t, m, 2) = d2[t];
    }
  }
  return out;
}

Tensor log_mel_features(std::span<const double> waveform, const MelConfig& cfg) {
  FeatureExtractor fx(cfg);
  return fx.features(waveform);
}

Normalizer Normalizer::fit(std::span<const LabeledExample> corpus) {
  if (corpus.empty()) throw ParameterError("normalizer: empty corpus");
  const auto& shape = corpus.front().features.shape();
  if (shape.size() != 3) throw ParameterError("normalizer: features must be [T x F x C]");
  const std::size_t bins = shape[1], channels = shape[2];
  Normalizer norm;
  norm.mean = Tensor({bins, channels});
  norm.scale = Tensor({bins, channels}, 1.0);
  Tensor sq({bins, channels});
  double frames = 0.0;
  for (const auto& ex : corpus) {
    const Tensor& x = ex.features;
    if (x.rank() != 3 || x.dim(1) != bins || x.dim(2) != channels) {
      throw ParameterError("normalizer: inconsistent feature shapes in corpus");
    }
    for (std::size_t t = 0; t < x.dim(0); ++t)
      for (std::size_t i = 0; i < bins * channels; ++i)
        norm.mean[i] += x[t * bins * channels + i];
    frames += static_cast<double>(x.dim(0));
  }
  for (double& m : norm.mean.storage()) m /= frames;
  for (const auto& ex : corpus) {
    const Tensor& x = ex.features;
    for (std::size_t t = 0; t < x.dim(0); ++t)
      for (std::size_t i = 0; i < bins * channels; ++i) {
        const double d = x[t * bins * channels + i] - norm.mean[i];
        sq[i] += d * d;
      }
  }
  for (std::size_t i = 0; i < bins * channels; ++i) {
    const double var = sq[i] / frames;
    norm.scale[i] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return norm;
}

void Normalizer::apply(Tensor& x) const {
  const std::size_t width = mean.size();
  if (x.rank() != 3 || x.dim(1) * x.dim(2) != width) {
    throw ParameterError("normalizer: feature shape " + shape_string(x.shape()) +
                         " does not match statistics " + shape_string(mean.shape()));
  }
  for (std::size_t t = 0; t < x.dim(0); ++t)
    for (std::size_t i = 0; i < width; ++i) {
      double& v = x[t * width + i];
      v = (v - mean[i]) * scale[i];
    }
}

void Normalizer::apply(std::vector<LabeledExample>& examples) const {
  for (auto& ex : examples) apply(ex.features);
}

}  // namespace deltaspike::features
