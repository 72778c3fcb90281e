// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "deltaspike/checkpoint.hpp"
#include "deltaspike/error.hpp"
#include "deltaspike/features.hpp"

namespace fs = std::filesystem;

namespace deltaspike::features {

namespace {

constexpr const char* kNoiseDir = "_background_noise_";

std::set<std::string> read_list(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("missing split list " + file.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::string mel_signature(const MelConfig& m) {
  nlohmann::json j = {{"sample_rate", m.sample_rate}, {"win", m.win},
                      {"hop", m.hop},                 {"n_mels", m.n_mels},
                      {"f_min", m.f_min},             {"f_max", m.f_max},
                      {"n_derivatives", m.n_derivatives}, {"log_floor", m.log_floor},
                      {"clip_samples", m.clip_samples}};
  return j.dump();
}

struct Job {
  std::string key;      // cache key / source tag
  fs::path file;
  std::size_t offset = 0;  // first sample of the crop (silence only)
  bool crop = false;
  int label = 0;
  int split = 0;  // 0 train, 1 validation, 2 test
  Tensor features;
  bool ok = false;
  std::string error;
};

void extract_all(std::vector<Job>& jobs, const MelConfig& mel, unsigned threads) {
  auto work = [&](std::size_t begin, std::size_t end) {
    FeatureExtractor fx(mel);
    for (std::size_t i = begin; i < end; ++i) {
      Job& job = jobs[i];
      if (job.ok) continue;
      try {
        Waveform wav = read_wav(job.file.string());
        if (wav.sample_rate != mel.sample_rate) {
          throw DataError(job.file.string() + ": sample rate " +
                          std::to_string(wav.sample_rate));
        }
        if (job.crop) {
          const std::size_t end_sample =
              std::min(wav.samples.size(), job.offset + mel.clip_samples);
          wav.samples = std::vector<double>(wav.samples.begin() + static_cast<std::ptrdiff_t>(std::min(job.offset, end_sample)),
                                            wav.samples.begin() + static_cast<std::ptrdiff_t>(end_sample));
        }
        job.features = fx.features(wav.samples);
        job.ok = true;
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, jobs.size()));
  if (workers == 1) {
    work(0, jobs.size());
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (jobs.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(jobs.size(), b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

int unknown_label(const SpeechCommandsConfig& cfg) { return static_cast<int>(cfg.words.size()); }
int silence_label(const SpeechCommandsConfig& cfg) { return static_cast<int>(cfg.words.size()) + 1; }

DatasetSplits build_speech_dataset(const SpeechCommandsConfig& cfg, Normalizer* normalizer,
                                   const WarningSink& warn) {
  cfg.mel.validate();
  const fs::path root(cfg.root);
  if (cfg.root.empty() || !fs::is_directory(root)) {
    throw ConfigError("speech commands root '" + cfg.root + "' is not a directory");
  }
  const auto validation = read_list(root / "validation_list.txt");
  const auto testing = read_list(root / "testing_list.txt");
  for (const auto& v : validation) {
    if (testing.count(v)) throw ConfigError("utterance in both split lists: " + v);
  }

  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < cfg.words.size(); ++i) labels[cfg.words[i]] = static_cast<int>(i);
  const int unknown = unknown_label(cfg), silence = silence_label(cfg);

  // Enumerate utterances in sorted order so sampling is reproducible.
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename() != kNoiseDir) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());

  // by_split[split][label] -> relative paths
  std::vector<std::map<int, std::vector<std::string>>> by_split(3);
  for (const auto& dir : dirs) {
    const std::string word = dir.filename().string();
    const auto it = labels.find(word);
    const int label = it == labels.end() ? unknown : it->second;
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") {
        files.push_back(word + "/" + e.path().filename().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) {
      const int split = validation.count(f) ? 1 : testing.count(f) ? 2 : 0;
      by_split[split][label].push_back(std::move(f));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<Job> jobs;
  for (int split = 0; split < 3; ++split) {
    const std::size_t cap = split == 0 ? cfg.max_train_per_class : cfg.max_eval_per_class;
    double word_total = 0.0;
    for (auto& [label, files] : by_split[split]) {
      if (cap != 0 && files.size() > cap) {
        std::shuffle(files.begin(), files.end(), rng);
        files.resize(cap);
        std::sort(files.begin(), files.end());
      }
      if (label != unknown) word_total += static_cast<double>(files.size());
      for (const auto& f : files) {
        Job job;
        job.key = f;
        job.file = root / f;
        job.label = label;
        job.split = split;
        jobs.push_back(std::move(job));
      }
    }
    // Silence: as many crops as the mean per-word count of this split.
    std::vector<fs::path> noise;
    if (fs::is_directory(root / kNoiseDir)) {
      for (const auto& e : fs::directory_iterator(root / kNoiseDir)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") noise.push_back(e.path());
      }
    }
    std::sort(noise.begin(), noise.end());
    const auto n_silence = static_cast<std::size_t>(
        std::round(word_total / static_cast<double>(std::max<std::size_t>(1, cfg.words.size()))));
    if (noise.empty() || n_silence == 0) {
      if (warn && n_silence > 0) warn("no background noise files; silence class is empty");
      continue;
    }
    std::vector<std::size_t> lengths;
    for (const auto& p : noise) {
      try {
        lengths.push_back(read_wav(p.string()).samples.size());
      } catch (const std::exception& e) {
        if (warn) warn(std::string("skipping noise file: ") + e.what());
        lengths.push_back(0);
      }
    }
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < noise.size(); ++i) {
      if (lengths[i] >= cfg.mel.clip_samples) usable.push_back(i);
    }
    if (usable.empty()) {
      if (warn) warn("background noise files shorter than one clip; silence class is empty");
      continue;
    }
    for (std::size_t s = 0; s < n_silence; ++s) {
      const std::size_t i = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
      const std::size_t offset = std::uniform_int_distribution<std::size_t>(
          0, lengths[i] - cfg.mel.clip_samples)(rng);
      Job job;
      job.file = noise[i];
      job.key = std::string(kNoiseDir) + "/" + noise[i].filename().string() + "@" +
                std::to_string(offset);
      job.crop = true;
      job.offset = offset;
      job.label = silence;
      job.split = split;
      jobs.push_back(std::move(job));
    }
  }

  // Feature cache: unnormalized features keyed by source tag.
  checkpoint::Container cache;
  bool cache_dirty = false;
  const std::string signature = mel_signature(cfg.mel);
  if (!cfg.cache_path.empty() && fs::exists(cfg.cache_path)) {
    try {
      cache = checkpoint::read_container(cfg.cache_path);
      if (cache.kind != "feature-cache" || cache.metadata != signature) cache = {};
    } catch (const std::exception& e) {
      if (warn) warn(std::string("ignoring unreadable feature cache: ") + e.what());
      cache = {};
    }
  }
  std::map<std::string, const Tensor*> cached;
  for (const auto& t : cache.tensors) cached[t.name] = &t.tensor;
  for (Job& job : jobs) {
    const auto it = cached.find(job.key);
    if (it != cached.end()) {
      job.features = *it->second;
      job.ok = true;
    }
  }
  extract_all(jobs, cfg.mel, cfg.threads);

  DatasetSplits out;
  out.class_names = cfg.words;
  out.class_names.push_back("unknown");
  out.class_names.push_back("silence");
  std::vector<LabeledExample>* dst[3] = {&out.train, &out.validation, &out.test};
  for (Job& job : jobs) {
    if (!job.ok) {
      if (warn) warn("skipping " + job.key + ": " + job.error);
      continue;
    }
    if (!cfg.cache_path.empty() && !cached.count(job.key)) {
      cache.tensors.push_back({job.key, job.features});
      cache_dirty = true;
    }
    dst[job.split]->push_back({std::move(job.features), job.label, job.key});
  }
  if (cache_dirty) {
    cache.kind = "feature-cache";
    cache.metadata = signature;
    checkpoint::write_container(cfg.cache_path, cache);
  }
  if (out.train.empty()) throw ConfigError("speech commands: empty training split");

  const Normalizer norm = Normalizer::fit(out.train);
  norm.apply(out.train);
  norm.apply(out.validation);
  norm.apply(out.test);
  if (normalizer) *normalizer = norm;
  return out;
}

}  // namespace deltaspike::features
