// SPDX-License-Identifier: Apache-2.0
//
// Log-Mel front end (static, delta and delta-delta channels), corpus
// normalization, WAV input, the Speech Commands dataset layout and a
// synthetic stand-in task.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deltaspike/example.hpp"
#include "deltaspike/tensor.hpp"

namespace deltaspike::features {

struct MelConfig {
  int sample_rate = 16000;
  std::size_t win = 480;  // 30 ms
  std::size_t hop = 160;  // 10 ms
  std::size_t n_mels = 40;
  double f_min = 20.0;
  double f_max = 4000.0;
  std::size_t n_derivatives = 2;
  double log_floor = 1e-10;
  std::size_t clip_samples = 16000;  // shorter inputs are zero-padded to this

  void validate() const;
  std::size_t n_fft() const { return win; }
  std::size_t n_bins() const { return n_fft() / 2 + 1; }
};

/// HTK mel scale: 2595 log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Peak frequency of every triangular filter.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

/// n_mels x n_bins triangular filters on the FFT bin frequencies.
Tensor mel_filterbank(const MelConfig& cfg);

/// 1 + floor((length - win) / hop), or 0 when length < win.
std::size_t frame_count(std::size_t length, const MelConfig& cfg);

/// Centered difference (x[n+1] - x[n-1]) / 2 with replicated edges;
/// order 2 applies it twice.
std::vector<double> delta_features(std::span<const double> x, int order);

/// Owns the FFT plan and filterbank; one instance per thread.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(MelConfig cfg = {});
  ~FeatureExtractor();
  FeatureExtractor(const FeatureExtractor&) = delete;
  FeatureExtractor& operator=(const FeatureExtractor&) = delete;

  const MelConfig& config() const { return cfg_; }

  /// Hann-windowed magnitude STFT, no centering: [frames x n_bins].
  Tensor magnitude_stft(std::span<const double> waveform);

  /// log(mel energies + floor): [frames x n_mels].
  Tensor log_mel(std::span<const double> waveform);

  /// [frames x n_mels x (1 + n_derivatives)], before normalization. Inputs
  /// shorter than clip_samples are zero-padded to it.
  Tensor features(std::span<const double> waveform);

 private:
  struct Fft;
  MelConfig cfg_;
  Tensor filterbank_;
  std::vector<double> window_;
  std::unique_ptr<Fft> fft_;
};

/// Convenience wrapper building a temporary extractor.
Tensor log_mel_features(std::span<const double> waveform, const MelConfig& cfg = {});

/// Per-(bin, channel) standardization with statistics from a training corpus.
struct Normalizer {
  Tensor mean;   // [F x C]
  Tensor scale;  // [F x C], 1 / population std (1 where the variance is 0)

  /// Two-pass mean/variance over every frame of every example.
  static Normalizer fit(std::span<const LabeledExample> corpus);
  void apply(Tensor& features) const;
  void apply(std::vector<LabeledExample>& examples) const;
  bool empty() const { return mean.empty(); }
};

struct Waveform {
  int sample_rate = 0;
  std::vector<double> samples;  // first channel, scaled to [-1, 1)
};

/// 16-bit PCM RIFF/WAVE reader. Throws IoError / DataError.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, std::span<const double> samples,
               int sample_rate);

inline const std::vector<std::string>& speech_command_words() {
  static const std::vector<std::string> words = {
      "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"};
  return words;
}

struct SpeechCommandsConfig {
  std::string root;
  /// Target words get labels 0..k-1, then unknown = k and silence = k + 1.
  std::vector<std::string> words = speech_command_words();
  std::size_t max_train_per_class = 0;  // 0 keeps everything
  std::size_t max_eval_per_class = 0;
  std::string cache_path;  // optional feature cache
  MelConfig mel;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

using WarningSink = std::function<void(const std::string&)>;

/// Loads a Speech Commands V1 tree. Honors validation_list.txt and
/// testing_list.txt exactly, maps non-target words to unknown and draws
/// random one-second background-noise crops as silence (as many per split as
/// the mean per-word count). Features are normalized with training-split
/// statistics; the fitted normalizer is returned through `normalizer`.
DatasetSplits build_speech_dataset(const SpeechCommandsConfig& cfg,
                                   Normalizer* normalizer = nullptr,
                                   const WarningSink& warn = {});

int unknown_label(const SpeechCommandsConfig& cfg);
int silence_label(const SpeechCommandsConfig& cfg);

struct SyntheticConfig {
  std::size_t n_classes = 4;
  std::size_t n_examples = 600;
  std::size_t steps = 40;
  std::size_t bins = 16;
  std::size_t channels = 2;  // static, then temporal derivatives
  double noise = 0.3;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
};

/// Each class is a train of smooth time-frequency bumps with a
/// class-specific frequency band and period; onset, band position and
/// amplitude are jittered per example and Gaussian noise is added.
/// Normalized with training statistics. Deterministic in `seed`.
DatasetSplits synthetic_dataset(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace deltaspike::features
