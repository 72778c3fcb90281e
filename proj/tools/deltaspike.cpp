// SPDX-License-Identifier: Apache-2.0
//
// deltaspike: encode signals into events, check gradients, train and
// evaluate spiking networks. Run `deltaspike <command> --help` for flags.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "deltaspike/commands.hpp"
#include "deltaspike/error.hpp"

namespace fs = std::filesystem;
using namespace deltaspike;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("DELTASPIKE_SPEECH_COMMANDS");
  return env ? env : "";
}

void add_dataset_flags(CLI::App* cmd, cli::DatasetOptions& d) {
  cmd->add_option("--dataset", d.kind, "synthetic or speech-commands")
      ->check(CLI::IsMember({"synthetic", "speech-commands"}))
      ->capture_default_str();
  cmd->add_option("--data-dir", d.data_dir,
                  "Speech Commands V1 root (default: $DELTASPIKE_SPEECH_COMMANDS)");
  cmd->add_option("--words", d.words, "target words; others map to unknown")
      ->delimiter(',');
  cmd->add_option("--max-train-per-class", d.max_train_per_class, "0 keeps every clip");
  cmd->add_option("--max-eval-per-class", d.max_eval_per_class, "0 keeps every clip");
  cmd->add_option("--cache", d.cache, "feature cache file");
  auto& s = d.synthetic;
  cmd->add_option("--synthetic-classes", s.n_classes)->capture_default_str();
  cmd->add_option("--synthetic-examples", s.n_examples)->capture_default_str();
  cmd->add_option("--synthetic-steps", s.steps)->capture_default_str();
  cmd->add_option("--synthetic-bins", s.bins)->capture_default_str();
  cmd->add_option("--synthetic-noise", s.noise)->capture_default_str();
}

// The invocation as a [train] config section: given flags plus every option
// with a default, so rerunning with --config reproduces it.
std::string train_section(const CLI::App& cmd) {
  std::ostringstream out;
  out << "[" << cmd.get_name() << "]\n";
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || !opt->get_configurable()) continue;
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->results();
    } else if (!opt->get_default_str().empty()) {
      values = {opt->get_default_str()};
    } else {
      continue;
    }
    out << name << " = ";
    const bool list = opt->get_expected_max() > 1;
    if (list) out << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
      out << (i ? ", " : "") << '"' << values[i] << '"';
    }
    out << (list ? "]\n" : "\n");
  }
  return out.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Send-on-delta event coding and spiking network training"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key = value config file; flags override it");

  // encode
  cli::EncodeOptions enc;
  auto* encode = app.add_subcommand("encode", "Encode a signal into send-on-delta events");
  encode->add_option("--input", enc.input, "text file (one sample per row) or .wav");
  encode->add_option("--generate", enc.generate, "ramp, sine, constant or walk");
  encode->add_option("--steps", enc.steps)->capture_default_str();
  encode->add_option("--dims", enc.dims, "walk dimensions")->capture_default_str();
  encode->add_option("--slope", enc.slope, "ramp slope, walk step std")->capture_default_str();
  encode->add_option("--amplitude", enc.amplitude)->capture_default_str();
  encode->add_option("--period", enc.period, "sine period in steps")->capture_default_str();
  encode->add_option("--seed", enc.seed)->capture_default_str();
  encode->add_option("--codec", enc.codec, "sod, if or multidim")
      ->check(CLI::IsMember({"sod", "if", "multidim"}))
      ->capture_default_str();
  encode->add_option("--mode", enc.mode, "sod reference: delta or value")
      ->check(CLI::IsMember({"delta", "value"}))
      ->capture_default_str();
  encode->add_option("--delta", enc.delta, "threshold / direction weight")->capture_default_str();
  encode->add_option("--bank", enc.bank, "multidim direction rows (text)");
  encode->add_option("--leak", enc.leak, "multidim leak in [0, 1]")->capture_default_str();
  encode->add_option("--output", enc.output, "event stream file");

  // gradcheck
  learn::GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare BPTT gradients with finite differences");
  gradcheck->add_option("--seed", gc.seed)->capture_default_str();
  gradcheck->add_option("--instances", gc.instances)->capture_default_str();
  gradcheck->add_option("--max-neurons", gc.max_neurons)->capture_default_str();
  gradcheck->add_option("--max-steps", gc.max_steps)->capture_default_str();
  gradcheck->add_option("--fd-step", gc.fd_step)->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gradcheck->add_option("--sigma", gc.sigma)->capture_default_str();
  gradcheck->add_flag("--corrupt-backward", gc.corrupt_backward)->group("");

  // train
  cli::TrainOptions tr;
  tr.dataset.data_dir = default_data_dir();
  tr.output_dir = "runs/train";
  std::string forward_mode = "hard";
  bool full = false;
  bool no_lateral = false;
  auto* train = app.add_subcommand("train", "Train a spiking network");
  add_dataset_flags(train, tr.dataset);
  train->add_flag("--full", full,
                  "speech-commands: every word and clip, reference layers, 30 epochs");
  train->add_option("--layers", tr.layers, "e.g. conv:64:4x3:1x1,conv:64:4x3:4x3,fc:32");
  train->add_flag("--no-lateral", no_lateral, "self-reset only");
  train->add_option("--init-gain", tr.init_gain)->capture_default_str();
  train->add_option("--tau-mem", tr.tau_mem, "seconds")->capture_default_str();
  train->add_option("--lr", tr.train.lr)->capture_default_str();
  train->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train->add_option("--warmup-epochs", tr.train.warmup_epochs)->capture_default_str();
  train->add_option("--weight-decay", tr.train.weight_decay)->capture_default_str();
  train->add_option("--grad-clip", tr.train.grad_clip)->capture_default_str();
  train->add_option("--reg", tr.train.reg_coeff_base, "spike-count regularization base")
      ->capture_default_str();
  train->add_option("--sigma", tr.train.sigma, "surrogate scale")->capture_default_str();
  train->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train->add_option("--forward-mode", forward_mode, "hard or relaxed")
      ->check(CLI::IsMember({"hard", "relaxed"}))
      ->capture_default_str();
  train->add_option("--threads", tr.train.threads)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--output", tr.output_dir, "run directory")->capture_default_str();

  // eval
  cli::EvalOptions ev;
  ev.data_dir = default_data_dir();
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--split", ev.split)
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  eval->add_option("--data-dir", ev.data_dir, "overrides the dataset root stored in the checkpoint");
  eval->add_option("--threads", ev.threads)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  auto log = [](const std::string& line) { std::cerr << line << '\n'; };

  if (*encode) {
    const auto summary = cli::run_encode(enc);
    std::cout << cli::summary_json(summary) << '\n';
    return cli::kExitOk;
  }

  if (*gradcheck) {
    const auto report = learn::gradcheck(gc);
    std::cout << cli::gradcheck_report_text(report, gc.tolerance);
    return report.passed ? cli::kExitOk : cli::kExitCheckFailed;
  }

  if (*train) {
    tr.lateral = !no_lateral;
    tr.train.forward_mode = forward_mode == "hard" ? net::SpikeMode::kHard : net::SpikeMode::kRelaxed;
    tr.dataset.seed = tr.seed;
    if (tr.dataset.kind == "speech-commands") {
      if (tr.dataset.data_dir.empty()) {
        throw ConfigError("speech-commands needs --data-dir or $DELTASPIKE_SPEECH_COMMANDS");
      }
      if (!full) {
        // Flags given explicitly win over the subset defaults.
        if (train->count("--words") == 0) tr.dataset.words = cli::subset_words();
        if (train->count("--max-train-per-class") == 0)
          tr.dataset.max_train_per_class = cli::kSubsetTrainPerClass;
        if (train->count("--max-eval-per-class") == 0)
          tr.dataset.max_eval_per_class = cli::kSubsetEvalPerClass;
        if (train->count("--epochs") == 0) tr.train.epochs = cli::kSubsetEpochs;
        if (tr.layers.empty()) tr.layers = cli::subset_layers();
      }
    }
    std::error_code ec;
    fs::create_directories(tr.output_dir, ec);
    if (ec) throw IoError(tr.output_dir, "cannot create run directory: " + ec.message());
    const fs::path config_path = fs::path(tr.output_dir) / "config.ini";
    std::ofstream cfg(config_path);
    cfg << train_section(*train);
    if (!cfg) throw IoError(config_path.string(), "write failed");
    cfg.close();

    const auto summary = cli::run_train(tr, log);
    const auto& last = summary.result.history.back();
    std::cout << learn::metrics_record(last.epoch, "validation", last.validation) << '\n';
    return cli::kExitOk;
  }

  if (*eval) {
    const auto summary = cli::run_eval(ev, log);
    std::cout << cli::eval_json(summary, ev.split) << '\n';
    return cli::kExitOk;
  }
  return cli::kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "deltaspike: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}
