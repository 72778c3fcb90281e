// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration behind the command-line tool: encode, gradcheck, train
// and eval. Everything here is independent of argument parsing so it can be
// driven from tests and the Python module.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "deltaspike/events.hpp"
#include "deltaspike/features.hpp"
#include "deltaspike/learn.hpp"
#include "deltaspike/net.hpp"

namespace deltaspike::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // gradcheck mismatch
  kExitConfig = 2,       // bad flags, config file or missing dataset
  kExitData = 3,         // malformed input data
  kExitDivergence = 4,   // non-finite loss during training
  kExitIo = 5,           // unreadable or unwritable file
  kExitParameter = 6,    // invalid numeric parameter
};

/// Maps the library's exception types to exit codes; unknown types map to 1.
int exit_code_for(const std::exception& e);

// encode

struct EncodeOptions {
  std::string input;               // text (one sample per line, commas between dims) or .wav
  std::string generate;            // "ramp", "sine", "constant", "walk" when no input
  std::size_t steps = 200;
  std::size_t dims = 1;            // for generated walks
  double slope = 0.3;              // ramp increment per step
  double amplitude = 1.0;          // sine amplitude, constant value
  double period = 50.0;            // sine period in steps
  std::uint64_t seed = 0;          // generated walks
  std::string codec = "sod";       // "sod", "if", "multidim"
  std::string mode = "delta";      // sod reference: "delta" or "value"
  double delta = 1.0;              // sod threshold; if/multidim axis weight
  std::string bank;                // multidim direction rows (text); default axes
  double leak = 1.0;               // multidim leak_beta
  std::string output;              // event stream file (optional)
};

struct EncodeSummary {
  events::EventStream stream{0, 0};
  std::size_t steps = 0;
  std::size_t dims = 0;
  double max_error = 0.0;   // max over steps and dims of |x - x_hat|
  double mean_error = 0.0;  // mean over steps and dims of |x - x_hat|
};

/// Loads a [T x m] signal from a text or WAV file.
Tensor load_signal(const std::string& path);
Tensor generate_signal(const EncodeOptions& opt);

EncodeSummary run_encode(const EncodeOptions& opt);
std::string summary_json(const EncodeSummary& s);

// gradcheck

std::string gradcheck_report_text(const learn::GradcheckReport& r,
                                  double tolerance);

// train / eval

/// Layer list such as "conv:64:4x3:1x1,conv:64:4x3:4x3,fc:32" where conv
/// entries are kind:units:HxW:dTxdF.
std::vector<net::LayerSpec> parse_layers(const std::string& text);
std::string format_layers(const std::vector<net::LayerSpec>& layers);

/// Three 64-channel 4x3 convolutions, dilations (1,1), (4,3), (16,9).
std::string reference_layers();
/// Two small convolutions sized for the synthetic task.
std::string synthetic_layers();

/// Desk-scale Speech Commands run: yes/no plus unknown and silence, at most
/// 2000 clips, ten epochs on 32-channel versions of the reference layers.
inline constexpr std::size_t kSubsetTrainPerClass = 400;
inline constexpr std::size_t kSubsetEvalPerClass = 50;
inline constexpr std::size_t kSubsetEpochs = 10;
std::string subset_layers();
inline const std::vector<std::string>& subset_words() {
  static const std::vector<std::string> words = {"yes", "no"};
  return words;
}

struct DatasetOptions {
  std::string kind = "synthetic";  // or "speech-commands"
  std::uint64_t seed = 1;
  features::SyntheticConfig synthetic;
  std::string data_dir;
  std::vector<std::string> words = features::speech_command_words();
  std::size_t max_train_per_class = 0;
  std::size_t max_eval_per_class = 0;
  std::string cache;
  unsigned threads = 1;

  std::string to_json() const;
  static DatasetOptions from_json(const std::string& text);
};

DatasetSplits load_dataset(const DatasetOptions& opt,
                           const features::WarningSink& warn = {});

struct TrainOptions {
  DatasetOptions dataset;
  std::string layers;  // empty: reference_layers() or synthetic_layers()
  bool lateral = true;
  double init_gain = 0.4;
  double tau_mem = 20e-3;
  learn::TrainConfig train;
  std::uint64_t seed = 1;
  std::string output_dir;  // empty: nothing written
};

struct TrainSummary {
  net::ModelConfig model;
  learn::TrainResult result;
  std::string final_checkpoint;
};

/// Line sink for progress messages (metrics records, warnings).
using LogSink = std::function<void(const std::string&)>;

/// Trains and, when output_dir is set, writes metrics.jsonl,
/// checkpoints/epoch_NNN.ckpt and final.ckpt into it.
TrainSummary run_train(const TrainOptions& opt, const LogSink& log = {});

struct EvalOptions {
  std::string checkpoint;
  std::string split = "validation";  // "train", "validation" or "test"
  std::string data_dir;              // overrides the stored dataset root
  unsigned threads = 1;
};

struct EvalSummary {
  learn::SplitMetrics metrics;
  std::size_t examples = 0;
  std::size_t n_classes = 0;
};

EvalSummary run_eval(const EvalOptions& opt, const LogSink& log = {});
std::string eval_json(const EvalSummary& s, const std::string& split);

}  // namespace deltaspike::cli
