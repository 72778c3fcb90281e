// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deltaspike/checkpoint.hpp"
#include "deltaspike/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace deltaspike::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const UsageError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const ParameterError*>(&e)) return kExitParameter;
  return kExitCheckFailed;
}

// ---------------------------------------------------------------- encode

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

std::vector<double> parse_row(const std::string& line, const std::string& path,
                              std::size_t lineno) {
  std::vector<double> row;
  std::string cell;
  std::istringstream cells(line);
  while (std::getline(cells, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    if (first == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) + ": empty field");
    }
    const std::string token = cell.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || !std::isfinite(v)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + token + "'");
    }
    row.push_back(v);
  }
  return row;
}

Tensor read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open");
  std::vector<double> values;
  std::size_t width = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto row = parse_row(line, path, lineno);
    if (rows == 0) width = row.size();
    if (row.size() != width) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(width) + " columns");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": no samples");
  return Tensor({rows, width}, std::move(values));
}

std::vector<double> column(const Tensor& x, std::size_t d) {
  std::vector<double> out(x.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = x.at(n, d);
  return out;
}

void accumulate_error(const Tensor& x, const Tensor& x_hat, EncodeSummary& s) {
  double sum = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = std::abs(x[k] - x_hat[k]);
    s.max_error = std::max(s.max_error, e);
    sum += e;
  }
  s.mean_error = x.size() ? sum / static_cast<double>(x.size()) : 0.0;
}

}  // namespace

Tensor load_signal(const std::string& path) {
  if (ends_with(path, ".wav")) {
    const auto wav = features::read_wav(path);
    if (wav.samples.empty()) throw DataError(path + ": no samples");
    return Tensor({wav.samples.size(), 1}, wav.samples);
  }
  return read_matrix(path);
}

Tensor generate_signal(const EncodeOptions& opt) {
  if (opt.steps == 0) throw ParameterError("encode: steps must be > 0");
  if (opt.generate == "ramp" || opt.generate == "constant" || opt.generate == "sine") {
    Tensor x({opt.steps, 1});
    for (std::size_t n = 0; n < opt.steps; ++n) {
      const double t = static_cast<double>(n);
      if (opt.generate == "ramp") {
        x.at(n, 0) = opt.slope * t;
      } else if (opt.generate == "constant") {
        x.at(n, 0) = opt.amplitude;
      } else {
        x.at(n, 0) = opt.amplitude * std::sin(2.0 * 3.14159265358979323846 * t / opt.period);
      }
    }
    return x;
  }
  if (opt.generate == "walk") {
    if (opt.dims == 0) throw ParameterError("encode: dims must be > 0");
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> g(0.0, opt.slope);
    Tensor x({opt.steps, opt.dims});
    for (std::size_t n = 1; n < opt.steps; ++n)
      for (std::size_t d = 0; d < opt.dims; ++d) x.at(n, d) = x.at(n - 1, d) + g(rng);
    return x;
  }
  throw ParameterError("encode: unknown generator '" + opt.generate +
                       "' (ramp, sine, constant, walk)");
}

EncodeSummary run_encode(const EncodeOptions& opt) {
  if (opt.input.empty() == opt.generate.empty()) {
    throw ConfigError("encode: give exactly one of --input or --generate");
  }
  const Tensor x = opt.input.empty() ? generate_signal(opt) : load_signal(opt.input);
  EncodeSummary s;
  s.steps = x.dim(0);
  s.dims = x.dim(1);

  if (opt.codec == "sod" || opt.codec == "if") {
    if (s.dims != 1) {
      throw ParameterError("encode: codec '" + opt.codec + "' needs a 1-D signal, got " +
                           std::to_string(s.dims) + " columns");
    }
    const auto xs = column(x, 0);
    Tensor x_hat({s.steps, 1});
    if (opt.codec == "if") {
      s.stream = events::if_sod_encode(xs, opt.delta, -opt.delta);
      const auto rec = events::sod_reconstruct(s.stream, xs[0], opt.delta);
      std::copy(rec.begin(), rec.end(), x_hat.data());
    } else if (opt.mode == "delta") {
      s.stream = events::sod_sample(xs, opt.delta, events::ReferenceMode::kDelta);
      const auto rec = events::sod_reconstruct(s.stream, xs[0], opt.delta);
      std::copy(rec.begin(), rec.end(), x_hat.data());
    } else if (opt.mode == "value") {
      s.stream = events::sod_sample(xs, opt.delta, events::ReferenceMode::kValue);
      // The value-reference receiver holds the sampled value.
      double held = xs[0];
      auto it = s.stream.events().begin();
      for (std::size_t n = 0; n < s.steps; ++n) {
        if (it != s.stream.events().end() && it->step == n) {
          held = xs[n];
          ++it;
        }
        x_hat.at(n, 0) = held;
      }
    } else {
      throw ParameterError("encode: mode must be 'delta' or 'value'");
    }
    accumulate_error(x, x_hat, s);
  } else if (opt.codec == "multidim") {
    const events::DirectionBank bank =
        opt.bank.empty() ? events::DirectionBank::axes(s.dims, opt.delta)
                         : events::DirectionBank(read_matrix(opt.bank));
    s.stream = events::multidim_sod_encode(x, bank, opt.leak);
    // Receiver state after step n's events, starting from x[0].
    std::vector<double> level(x.data(), x.data() + s.dims);
    Tensor x_hat({s.steps, s.dims});
    auto it = s.stream.events().begin();
    for (std::size_t n = 0; n < s.steps; ++n) {
      for (; it != s.stream.events().end() && it->step == n; ++it) {
        const auto w = bank.direction(it->neuron);
        for (std::size_t d = 0; d < s.dims; ++d) level[d] += w[d];
      }
      for (std::size_t d = 0; d < s.dims; ++d) x_hat.at(n, d) = level[d];
    }
    accumulate_error(x, x_hat, s);
  } else {
    throw ParameterError("encode: codec must be 'sod', 'if' or 'multidim'");
  }

  if (!opt.output.empty()) {
    std::ofstream out(opt.output);
    if (!out) throw IoError(opt.output, "cannot open for writing");
    events::write_event_stream(out, s.stream);
    if (!out) throw IoError(opt.output, "write failed");
  }
  return s;
}

std::string summary_json(const EncodeSummary& s) {
  return json{{"events", s.stream.size()},
              {"steps", s.steps},
              {"dims", s.dims},
              {"neurons", s.stream.n_neurons()},
              {"max_error", s.max_error},
              {"mean_error", s.mean_error}}
      .dump();
}

// ------------------------------------------------------------- gradcheck

std::string gradcheck_report_text(const learn::GradcheckReport& r, double tolerance) {
  std::ostringstream out;
  char buf[64];
  for (const auto& [kind, err] : r.worst_by_kind) {
    std::snprintf(buf, sizeof buf, "%.3e", err);
    out << "  " << learn::param_kind_name(kind) << ": worst relative error " << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.3e", r.worst_relative_error);
  out << (r.passed ? "PASS" : "FAIL") << ": worst relative error " << buf
      << " over " << r.checked << " gradient entries (tolerance " << tolerance << ")\n";
  return out.str();
}

// ----------------------------------------------------------------- train

std::vector<net::LayerSpec> parse_layers(const std::string& text) {
  std::vector<net::LayerSpec> layers;
  std::istringstream items(text);
  std::string item;
  auto number = [&](const std::string& s) -> std::size_t {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || s[0] == '-' || v == 0) {
      throw ConfigError("layers: bad positive integer '" + s + "' in '" + item + "'");
    }
    return static_cast<std::size_t>(v);
  };
  auto pair = [&](const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("layers: expected AxB, got '" + s + "'");
    return std::make_pair(number(s.substr(0, x)), number(s.substr(x + 1)));
  };
  while (std::getline(items, item, ',')) {
    std::vector<std::string> parts;
    std::istringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    net::LayerSpec spec;
    if (parts.size() == 2 && parts[0] == "fc") {
      spec.kind = net::LayerSpec::Kind::kFc;
      spec.units = number(parts[1]);
    } else if (parts.size() == 4 && parts[0] == "conv") {
      spec.kind = net::LayerSpec::Kind::kConv;
      spec.units = number(parts[1]);
      std::tie(spec.kernel_t, spec.kernel_f) = pair(parts[2]);
      std::tie(spec.dilation_t, spec.dilation_f) = pair(parts[3]);
    } else {
      throw ConfigError("layers: cannot parse '" + item +
                        "' (conv:units:HxW:dTxdF or fc:units)");
    }
    layers.push_back(spec);
  }
  if (layers.empty()) throw ConfigError("layers: need at least one layer");
  return layers;
}

std::string format_layers(const std::vector<net::LayerSpec>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    if (l.kind == net::LayerSpec::Kind::kFc) {
      out += "fc:" + std::to_string(l.units);
    } else {
      out += "conv:" + std::to_string(l.units) + ':' + std::to_string(l.kernel_t) + 'x' +
             std::to_string(l.kernel_f) + ':' + std::to_string(l.dilation_t) + 'x' +
             std::to_string(l.dilation_f);
    }
  }
  return out;
}

std::string reference_layers() {
  return format_layers(net::ModelConfig::speech_commands().layers);
}

std::string subset_layers() { return "conv:32:4x3:1x1,conv:32:4x3:4x3,conv:32:4x3:16x9"; }

std::string synthetic_layers() { return "conv:8:4x3:1x1,conv:8:4x3:4x2"; }

std::string DatasetOptions::to_json() const {
  json j = {{"kind", kind}, {"seed", seed}};
  if (kind == "synthetic") {
    j["synthetic"] = {{"n_classes", synthetic.n_classes},
                      {"n_examples", synthetic.n_examples},
                      {"steps", synthetic.steps},
                      {"bins", synthetic.bins},
                      {"channels", synthetic.channels},
                      {"noise", synthetic.noise},
                      {"train_fraction", synthetic.train_fraction},
                      {"validation_fraction", synthetic.validation_fraction}};
  } else {
    j["data_dir"] = data_dir;
    j["words"] = words;
    j["max_train_per_class"] = max_train_per_class;
    j["max_eval_per_class"] = max_eval_per_class;
    j["cache"] = cache;
  }
  return j.dump();
}

DatasetOptions DatasetOptions::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetOptions o;
    o.kind = j.at("kind").get<std::string>();
    o.seed = j.at("seed").get<std::uint64_t>();
    if (o.kind == "synthetic") {
      const json& s = j.at("synthetic");
      o.synthetic.n_classes = s.at("n_classes").get<std::size_t>();
      o.synthetic.n_examples = s.at("n_examples").get<std::size_t>();
      o.synthetic.steps = s.at("steps").get<std::size_t>();
      o.synthetic.bins = s.at("bins").get<std::size_t>();
      o.synthetic.channels = s.at("channels").get<std::size_t>();
      o.synthetic.noise = s.at("noise").get<double>();
      o.synthetic.train_fraction = s.at("train_fraction").get<double>();
      o.synthetic.validation_fraction = s.at("validation_fraction").get<double>();
    } else {
      o.data_dir = j.at("data_dir").get<std::string>();
      o.words = j.at("words").get<std::vector<std::string>>();
      o.max_train_per_class = j.at("max_train_per_class").get<std::size_t>();
      o.max_eval_per_class = j.at("max_eval_per_class").get<std::size_t>();
      o.cache = j.at("cache").get<std::string>();
    }
    return o;
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset description: ") + e.what());
  }
}

DatasetSplits load_dataset(const DatasetOptions& opt, const features::WarningSink& warn) {
  if (opt.kind == "synthetic") return features::synthetic_dataset(opt.synthetic, opt.seed);
  if (opt.kind == "speech-commands") {
    if (opt.data_dir.empty()) {
      throw ConfigError("speech-commands dataset needs --data-dir");
    }
    features::SpeechCommandsConfig cfg;
    cfg.root = opt.data_dir;
    cfg.words = opt.words;
    cfg.max_train_per_class = opt.max_train_per_class;
    cfg.max_eval_per_class = opt.max_eval_per_class;
    cfg.cache_path = opt.cache;
    cfg.seed = opt.seed;
    cfg.threads = opt.threads;
    return features::build_speech_dataset(cfg, nullptr, warn);
  }
  throw ConfigError("unknown dataset '" + opt.kind + "' (synthetic, speech-commands)");
}

namespace {

net::ModelConfig model_for(const TrainOptions& opt, const DatasetSplits& data) {
  const auto& first = data.train.front().features;
  if (first.rank() != 3) throw DataError("training features must be [T x F x C]");
  net::ModelConfig m;
  m.input_steps = first.dim(0);
  m.input_bins = first.dim(1);
  m.input_channels = first.dim(2);
  m.n_classes = data.class_names.size();
  m.lateral = opt.lateral;
  m.tau_mem = opt.tau_mem;
  m.init_gain = opt.init_gain;
  const std::string layers = !opt.layers.empty()               ? opt.layers
                             : opt.dataset.kind == "synthetic" ? synthetic_layers()
                                                               : reference_layers();
  m.layers = parse_layers(layers);
  return m;
}

json train_config_json(const learn::TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"reg_coeff_base", c.reg_coeff_base},
          {"forward_mode", c.forward_mode == net::SpikeMode::kHard ? "hard" : "relaxed"},
          {"sigma", c.sigma},
          {"batch_size", c.batch_size}};
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError(path.string(), "cannot open for appending");
  out << line << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

TrainSummary run_train(const TrainOptions& opt, const LogSink& log) {
  DatasetOptions dataset = opt.dataset;
  dataset.threads = std::max(dataset.threads, opt.train.threads);
  const DatasetSplits data =
      load_dataset(dataset, [&](const std::string& w) { if (log) log("warning: " + w); });
  if (data.train.empty()) throw ConfigError("training split is empty");

  TrainSummary summary;
  summary.model = model_for(opt, data);

  fs::path dir;
  if (!opt.output_dir.empty()) {
    dir = opt.output_dir;
    std::error_code ec;
    fs::create_directories(dir / "checkpoints", ec);
    if (ec) throw IoError(dir.string(), "cannot create run directory: " + ec.message());
    fs::remove(dir / "metrics.jsonl");
  }
  const json extra_base = {{"dataset", json::parse(opt.dataset.to_json())},
                           {"train", train_config_json(opt.train)},
                           {"seed", opt.seed},
                           {"class_names", data.class_names}};

  if (!dir.empty()) {
    // Resolved settings; config.ini alongside records the invocation.
    json run = extra_base;
    run["model"] = json::parse(net::to_json(summary.model));
    run["layers"] = format_layers(summary.model.layers);
    std::ofstream out(dir / "run.json");
    out << run.dump(2) << '\n';
    if (!out) throw IoError((dir / "run.json").string(), "write failed");
  }

  auto on_epoch = [&](const learn::EpochMetrics& m, const net::NetworkParams& params) {
    const std::string train_line = learn::metrics_record(m.epoch, "train", m.train);
    const std::string val_line = learn::metrics_record(m.epoch, "validation", m.validation);
    if (log) {
      log(train_line);
      log(val_line);
    }
    if (dir.empty()) return;
    append_line(dir / "metrics.jsonl", train_line);
    append_line(dir / "metrics.jsonl", val_line);
    json extra = extra_base;
    extra["epoch"] = m.epoch;
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", m.epoch);
    checkpoint::save_checkpoint((dir / "checkpoints" / name).string(), summary.model,
                                params, extra.dump());
  };
  summary.result = learn::train_loop(data, summary.model, opt.train, opt.seed, on_epoch);

  if (!dir.empty()) {
    json extra = extra_base;
    extra["epoch"] = summary.result.history.size();
    summary.final_checkpoint = (dir / "final.ckpt").string();
    checkpoint::save_checkpoint(summary.final_checkpoint, summary.model,
                                summary.result.params, extra.dump());
  }
  return summary;
}

// ------------------------------------------------------------------ eval

EvalSummary run_eval(const EvalOptions& opt, const LogSink& log) {
  if (opt.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const checkpoint::Checkpoint ckpt = checkpoint::load_checkpoint(opt.checkpoint);
  json extra;
  try {
    extra = json::parse(ckpt.extra);
  } catch (const json::exception& e) {
    throw DataError(opt.checkpoint + ": bad metadata: " + e.what());
  }
  if (!extra.contains("dataset")) {
    throw ConfigError(opt.checkpoint + ": checkpoint does not record its dataset");
  }
  DatasetOptions dataset = DatasetOptions::from_json(extra["dataset"].dump());
  if (!opt.data_dir.empty()) dataset.data_dir = opt.data_dir;
  dataset.threads = opt.threads;
  const DatasetSplits data =
      load_dataset(dataset, [&](const std::string& w) { if (log) log("warning: " + w); });

  const std::vector<LabeledExample>* split = nullptr;
  if (opt.split == "train") split = &data.train;
  if (opt.split == "validation") split = &data.validation;
  if (opt.split == "test") split = &data.test;
  if (!split) throw ConfigError("eval: split must be train, validation or test");
  if (split->empty()) throw ConfigError("eval: split '" + opt.split + "' is empty");

  double sigma = 10.0;
  if (extra.contains("train")) sigma = extra["train"].value("sigma", sigma);
  const learn::LossSpec loss{
      extra.contains("train") ? extra["train"].value("reg_coeff_base", 0.1) : 0.1};
  EvalSummary s;
  s.metrics = learn::evaluate(ckpt.params, *split, loss, {net::SpikeMode::kHard, sigma},
                              opt.threads);
  s.examples = split->size();
  s.n_classes = ckpt.model.n_classes;
  return s;
}

std::string eval_json(const EvalSummary& s, const std::string& split) {
  return json{{"split", split},
              {"examples", s.examples},
              {"accuracy", s.metrics.accuracy},
              {"loss", s.metrics.loss},
              {"firing_rate_hz", s.metrics.firing_rate_hz},
              {"mean_firing_rate_hz", s.metrics.mean_firing_rate_hz}}
      .dump();
}

}  // namespace deltaspike::cli
