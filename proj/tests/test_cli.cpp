#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "deltaspike/checkpoint.hpp"
#include "deltaspike/commands.hpp"
#include "deltaspike/error.hpp"

using namespace deltaspike;
using namespace deltaspike::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() /
             ("deltaspike_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::size_t> steps_of(const events::EventStream& s, std::size_t neuron) {
  std::vector<std::size_t> out;
  for (const auto& e : s.events())
    if (e.neuron == neuron) out.push_back(e.step);
  return out;
}

TrainOptions tiny_run(const std::string& dir) {
  TrainOptions t;
  t.dataset.synthetic.n_examples = 80;
  t.dataset.synthetic.steps = 12;
  t.dataset.synthetic.bins = 8;
  t.layers = "conv:4:2x3:1x1";
  t.train.epochs = 2;
  t.train.batch_size = 16;
  t.seed = 5;
  t.dataset.seed = 5;
  t.output_dir = dir;
  return t;
}

}  // namespace

TEST_CASE("layer strings round trip and reject malformed entries") {
  const std::string text = "conv:64:4x3:1x1,conv:64:4x3:4x3,fc:32";
  const auto layers = parse_layers(text);
  REQUIRE(layers.size() == 3);
  CHECK(layers[1].dilation_t == 4);
  CHECK(layers[1].dilation_f == 3);
  CHECK(layers[2].kind == net::LayerSpec::Kind::kFc);
  CHECK(format_layers(layers) == text);
  CHECK(reference_layers() == "conv:64:4x3:1x1,conv:64:4x3:4x3,conv:64:4x3:16x9");
  for (const char* bad : {"", "conv:64:4x3", "conv:0:4x3:1x1", "fc:-3", "pool:2", "conv:8:4:1x1"}) {
    CHECK_THROWS_AS(parse_layers(bad), ConfigError);
  }
}

TEST_CASE("exit codes separate configuration, data and divergence failures") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(DataError("x")) == kExitData);
  CHECK(exit_code_for(DivergenceError("x")) == kExitDivergence);
  CHECK(exit_code_for(IoError("p", "x")) == kExitIo);
  CHECK(exit_code_for(ParameterError("x")) == kExitParameter);
  CHECK(kExitConfig != kExitData);
  CHECK(kExitData != kExitDivergence);
}

TEST_CASE("encode: value-reference ramp fires at 4, 8 and 12") {
  EncodeOptions o;
  o.generate = "ramp";
  o.steps = 13;
  o.slope = 0.3;
  o.mode = "value";
  const auto s = run_encode(o);
  CHECK(steps_of(s.stream, events::kOnNeuron) == std::vector<std::size_t>{4, 8, 12});
  CHECK(steps_of(s.stream, events::kOffNeuron).empty());
  // The held value lags the ramp by less than delta.
  CHECK(s.max_error < 1.0);
}

TEST_CASE("encode: a constant input produces no events") {
  EncodeOptions o;
  o.generate = "constant";
  o.amplitude = 3.5;
  for (const char* codec : {"sod", "if", "multidim"}) {
    o.codec = codec;
    const auto s = run_encode(o);
    CHECK(s.stream.empty());
    CHECK(s.max_error == 0.0);
  }
}

TEST_CASE("encode: orthogonal multidim run matches independent 1-D runs") {
  EncodeOptions o;
  o.generate = "walk";
  o.dims = 2;
  o.steps = 300;
  o.seed = 7;
  o.delta = 0.4;
  o.codec = "multidim";
  const auto multi = run_encode(o);
  const Tensor x = generate_signal(o);
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<double> col(o.steps);
    for (std::size_t n = 0; n < o.steps; ++n) col[n] = x.at(n, d);
    const auto one = events::sod_sample(col, o.delta);
    CHECK(steps_of(multi.stream, 2 * d) == steps_of(one, events::kOnNeuron));
    CHECK(steps_of(multi.stream, 2 * d + 1) == steps_of(one, events::kOffNeuron));
  }
}

TEST_CASE("encode: delta-reference reconstruction and stream file") {
  TempDir tmp("encode");
  const fs::path sig = tmp.path / "sig.txt";
  {
    std::ofstream out(sig);
    out << "# sine\n";
    for (int n = 0; n < 100; ++n) out << std::sin(0.1 * n) << '\n';
  }
  EncodeOptions o;
  o.input = sig.string();
  o.delta = 0.05;
  o.output = (tmp.path / "out.ev").string();
  const auto s = run_encode(o);
  CHECK(s.steps == 100);
  // Slope at most 0.1 per step, so one event per step keeps up within delta.
  CHECK(s.max_error < o.delta);
  std::ifstream in(o.output);
  CHECK(events::read_event_stream(in) == s.stream);
}

TEST_CASE("encode: input errors") {
  TempDir tmp("encode_err");
  EncodeOptions o;
  CHECK_THROWS_AS(run_encode(o), ConfigError);
  o.input = (tmp.path / "missing.txt").string();
  CHECK_THROWS_AS(run_encode(o), IoError);
  {
    std::ofstream(tmp.path / "bad.txt") << "1\n2\nabc\n";
    std::ofstream(tmp.path / "ragged.txt") << "1,2\n3\n";
    std::ofstream(tmp.path / "two.txt") << "1,2\n3,4\n";
  }
  o.input = (tmp.path / "bad.txt").string();
  CHECK_THROWS_AS(run_encode(o), DataError);
  o.input = (tmp.path / "ragged.txt").string();
  CHECK_THROWS_AS(run_encode(o), DataError);
  o.input = (tmp.path / "two.txt").string();
  CHECK_THROWS_AS(run_encode(o), ParameterError);
  o.codec = "multidim";
  CHECK(run_encode(o).dims == 2);
}

TEST_CASE("gradcheck report lists every parameter class") {
  learn::GradcheckOptions g;
  g.instances = 3;
  const auto text = gradcheck_report_text(learn::gradcheck(g), g.tolerance);
  for (const char* kind : {"weight", "beta", "threshold", "readout_weight", "readout_bias"}) {
    CHECK(text.find(std::string("  ") + kind + ":") != std::string::npos);
  }
  CHECK(text.rfind("PASS", 0) != std::string::npos);
}

TEST_CASE("dataset description round trips through JSON") {
  DatasetOptions d;
  d.synthetic.n_classes = 7;
  d.synthetic.noise = 0.125;
  d.seed = 99;
  const auto back = DatasetOptions::from_json(d.to_json());
  CHECK(back.to_json() == d.to_json());
  d.kind = "speech-commands";
  d.data_dir = "/data/sc";
  d.words = {"yes", "no"};
  d.max_train_per_class = 400;
  CHECK(DatasetOptions::from_json(d.to_json()).to_json() == d.to_json());
  CHECK_THROWS_AS(DatasetOptions::from_json("{\"kind\":1}"), DataError);
}

TEST_CASE("missing speech dataset is a configuration error") {
  DatasetOptions d;
  d.kind = "speech-commands";
  CHECK_THROWS_AS(load_dataset(d), ConfigError);
  d.data_dir = "/nonexistent/speech_commands";
  CHECK_THROWS_AS(load_dataset(d), ConfigError);
  d.kind = "imagenet";
  CHECK_THROWS_AS(load_dataset(d), ConfigError);
}

TEST_CASE("train writes a reproducible run directory") {
  TempDir a("train_a"), b("train_b");
  const auto first = run_train(tiny_run(a.path.string()));
  run_train(tiny_run(b.path.string()));
  const std::string metrics = slurp(a.path / "metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 4);
  CHECK(metrics == slurp(b.path / "metrics.jsonl"));
  CHECK(fs::exists(a.path / "checkpoints" / "epoch_001.ckpt"));
  CHECK(fs::exists(a.path / "checkpoints" / "epoch_002.ckpt"));
  CHECK(fs::exists(a.path / "run.json"));
  CHECK(slurp(a.path / "final.ckpt") == slurp(b.path / "final.ckpt"));

  const auto ckpt = checkpoint::load_checkpoint(first.final_checkpoint);
  CHECK(ckpt.model == first.model);
  CHECK(format_layers(ckpt.model.layers) == "conv:4:2x3:1x1");
}

TEST_CASE("eval matches forward-pass bookkeeping and sits at chance untrained") {
  TempDir tmp("eval");
  DatasetOptions d;
  d.synthetic.n_classes = 12;
  d.synthetic.n_examples = 1200;
  d.synthetic.steps = 16;
  d.synthetic.bins = 12;
  d.seed = 3;
  const auto data = load_dataset(d);

  net::ModelConfig m;
  m.input_steps = d.synthetic.steps;
  m.input_bins = d.synthetic.bins;
  m.input_channels = d.synthetic.channels;
  m.n_classes = 12;
  m.layers = parse_layers("conv:6:3x3:1x1,conv:6:3x3:2x2");
  const auto params = net::init_network(m, 11);
  const std::string path = (tmp.path / "untrained.ckpt").string();
  checkpoint::save_checkpoint(path, m, params,
                              "{\"dataset\":" + d.to_json() + "}");

  EvalOptions e;
  e.checkpoint = path;
  const auto s = run_eval(e);
  REQUIRE(s.examples == data.validation.size());
  CHECK(std::abs(s.metrics.accuracy - 1.0 / 12.0) < 0.06);

  double spikes = 0.0, neuron_steps = 0.0;
  std::vector<double> per_layer(m.layers.size(), 0.0);
  for (const auto& ex : data.validation) {
    const auto out = net::network_forward(params, ex.features);
    for (std::size_t l = 0; l < out.spike_counts.size(); ++l) {
      spikes += out.spike_counts[l];
      per_layer[l] += out.firing_rate_hz(l);
      neuron_steps += static_cast<double>(out.neurons[l] * out.steps);
    }
  }
  const double rate = spikes / (neuron_steps * net::kStepSeconds);
  CHECK(s.metrics.mean_firing_rate_hz == doctest::Approx(rate).epsilon(1e-12));
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    const double mean = per_layer[l] / static_cast<double>(data.validation.size());
    CHECK(s.metrics.firing_rate_hz[l] == doctest::Approx(mean).epsilon(1e-12));
  }

  e.split = "holdout";
  CHECK_THROWS_AS(run_eval(e), ConfigError);
  e.checkpoint = (tmp.path / "absent.ckpt").string();
  CHECK_THROWS_AS(run_eval(e), IoError);
}
