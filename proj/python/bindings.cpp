// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deltaspike/checkpoint.hpp"
#include "deltaspike/commands.hpp"
#include "deltaspike/dynamics.hpp"
#include "deltaspike/error.hpp"
#include "deltaspike/events.hpp"
#include "deltaspike/features.hpp"
#include "deltaspike/learn.hpp"
#include "deltaspike/net.hpp"

namespace py = pybind11;
using namespace deltaspike;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> vector_1d(const Array& a, const char* what) {
  if (a.ndim() != 1) throw ParameterError(std::string(what) + " must be 1-D");
  return {a.data(), a.data() + a.size()};
}

events::ReferenceMode reference_mode(const std::string& mode) {
  if (mode == "delta") return events::ReferenceMode::kDelta;
  if (mode == "value") return events::ReferenceMode::kValue;
  throw ParameterError("mode must be 'delta' or 'value'");
}

py::dict split_metrics(const learn::SplitMetrics& m) {
  py::dict d;
  d["loss"] = m.loss;
  d["accuracy"] = m.accuracy;
  d["firing_rate_hz"] = m.firing_rate_hz;
  d["mean_firing_rate_hz"] = m.mean_firing_rate_hz;
  return d;
}

// A network together with the architecture it was built from.
struct Network {
  net::ModelConfig config;
  net::NetworkParams params;
};

}  // namespace

PYBIND11_MODULE(_deltaspike, m) {
  m.doc() = "Send-on-delta event coding and surrogate-gradient spiking networks.";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // events
  py::class_<events::EventStream>(m, "EventStream")
      .def(py::init<std::size_t, std::size_t>(), py::arg("n_steps"), py::arg("n_neurons"))
      .def("push", &events::EventStream::push, py::arg("step"), py::arg("neuron"))
      .def_property_readonly("n_steps", &events::EventStream::n_steps)
      .def_property_readonly("n_neurons", &events::EventStream::n_neurons)
      .def("__len__", &events::EventStream::size)
      .def("__eq__", [](const events::EventStream& a, const events::EventStream& b) { return a == b; })
      .def("events",
           [](const events::EventStream& s) {
             py::array_t<std::int64_t> out({static_cast<py::ssize_t>(s.size()), py::ssize_t{2}});
             auto r = out.mutable_unchecked<2>();
             for (std::size_t i = 0; i < s.size(); ++i) {
               r(i, 0) = static_cast<std::int64_t>(s.events()[i].step);
               r(i, 1) = static_cast<std::int64_t>(s.events()[i].neuron);
             }
             return out;
           },
           "Events as an (N, 2) array of (step, neuron) rows.")
      .def("to_text",
           [](const events::EventStream& s) {
             std::ostringstream out;
             events::write_event_stream(out, s);
             return out.str();
           })
      .def_static("from_text", [](const std::string& text) {
        std::istringstream in(text);
        return events::read_event_stream(in);
      });

  m.def("sod_sample",
        [](const Array& x, double delta, const std::string& mode) {
          return events::sod_sample(vector_1d(x, "signal"), delta, reference_mode(mode));
        },
        py::arg("signal"), py::arg("delta"), py::arg("mode") = "delta");
  m.def("sod_reconstruct",
        [](const events::EventStream& s, double x0, double delta) {
          return to_numpy(events::sod_reconstruct(s, x0, delta));
        },
        py::arg("stream"), py::arg("x0"), py::arg("delta"));
  m.def("if_sod_encode",
        [](const Array& x, double w_on, double w_off) {
          return events::if_sod_encode(vector_1d(x, "signal"), w_on, w_off);
        },
        py::arg("signal"), py::arg("w_on"), py::arg("w_off"));

  py::class_<events::DirectionBank>(m, "DirectionBank")
      .def(py::init([](const Array& w) { return events::DirectionBank(from_numpy(w)); }),
           py::arg("directions"))
      .def_static("axes", &events::DirectionBank::axes, py::arg("dim"), py::arg("delta"))
      .def_property_readonly("n_neurons", &events::DirectionBank::n_neurons)
      .def_property_readonly("signal_dim", &events::DirectionBank::signal_dim)
      .def_property_readonly("directions",
                             [](const events::DirectionBank& b) { return to_numpy(b.directions()); });

  m.def("multidim_sod_encode",
        [](const Array& x, const events::DirectionBank& bank, double leak) {
          auto trace = events::multidim_sod_encode_traced(from_numpy(x), bank, leak);
          return py::make_tuple(std::move(trace.events), to_numpy(trace.potentials));
        },
        py::arg("signal"), py::arg("bank"), py::arg("leak") = 1.0,
        "Returns (events, potentials[T, n_neurons]).");
  m.def("reference_trajectory",
        [](const events::EventStream& s, const events::DirectionBank& bank, const Array& x0) {
          return to_numpy(events::reference_trajectory(s, bank, vector_1d(x0, "x0")));
        },
        py::arg("stream"), py::arg("bank"), py::arg("x0"));

  // dynamics
  m.def("beta_from_tau", &dynamics::beta_from_tau, py::arg("tau_mem"), py::arg("dt"));
  m.def("lif_exact_solve",
        [](const Array& input, double tau_mem, double dt, double u0) {
          return to_numpy(dynamics::lif_exact_solve(vector_1d(input, "input"), {tau_mem, dt}, u0));
        },
        py::arg("input"), py::arg("tau_mem"), py::arg("dt"), py::arg("u0") = 0.0);
  m.def("lif_discrete_step",
        [](const Array& potential, const Array& input, double beta) {
          dynamics::CellState s{vector_1d(potential, "potential"), {}};
          return to_numpy(dynamics::lif_discrete_step(s, vector_1d(input, "input"), beta).potential);
        },
        py::arg("potential"), py::arg("input"), py::arg("beta"));

  // features
  m.def("log_mel_features",
        [](const Array& waveform) { return to_numpy(features::log_mel_features(vector_1d(waveform, "waveform"))); },
        py::arg("waveform"), "[frames, 40, 3] log-mel features with deltas, before normalization.");
  m.def("mel_center_frequencies",
        []() { return to_numpy(features::mel_center_frequencies(features::MelConfig{})); });
  m.def("read_wav", [](const std::string& path) {
    auto w = features::read_wav(path);
    return py::make_tuple(to_numpy(w.samples), w.sample_rate);
  });

  // net
  py::class_<Network>(m, "Network")
      .def_static("init",
                  [](const std::string& config_json, std::uint64_t seed) {
                    Network n{net::model_config_from_json(config_json), {}};
                    n.params = net::init_network(n.config, seed);
                    return n;
                  },
                  py::arg("config_json"), py::arg("seed") = 0)
      .def_static("load",
                  [](const std::string& path) {
                    auto c = checkpoint::load_checkpoint(path);
                    return Network{std::move(c.model), std::move(c.params)};
                  },
                  py::arg("path"))
      .def_static("reference_config",
                  []() { return net::to_json(net::ModelConfig::speech_commands()); })
      .def_property_readonly("config_json", [](const Network& n) { return net::to_json(n.config); })
      .def("forward",
           [](const Network& n, const Array& features, bool relaxed, double sigma) {
             const auto out = net::network_forward(
                 n.params, from_numpy(features),
                 {relaxed ? net::SpikeMode::kRelaxed : net::SpikeMode::kHard, sigma});
             py::dict d;
             d["logits"] = to_numpy(out.logits);
             d["spike_counts"] = out.spike_counts;
             std::vector<double> rates;
             for (std::size_t l = 0; l < out.spike_counts.size(); ++l) rates.push_back(out.firing_rate_hz(l));
             d["firing_rate_hz"] = rates;
             std::vector<py::array_t<double>> spikes;
             for (const auto& t : out.traces) spikes.push_back(to_numpy(t.spikes));
             d["spikes"] = spikes;
             return d;
           },
           py::arg("features"), py::arg("relaxed") = false, py::arg("sigma") = 10.0);

  // learn / commands
  m.def("gradcheck",
        [](std::uint64_t seed, std::size_t instances, bool corrupt_backward) {
          learn::GradcheckOptions o;
          o.seed = seed;
          o.instances = instances;
          o.corrupt_backward = corrupt_backward;
          learn::GradcheckReport r;
          {
            py::gil_scoped_release release;
            r = learn::gradcheck(o);
          }
          py::dict by_kind;
          for (const auto& [kind, err] : r.worst_by_kind) by_kind[learn::param_kind_name(kind)] = err;
          py::dict d;
          d["passed"] = r.passed;
          d["worst_relative_error"] = r.worst_relative_error;
          d["checked"] = r.checked;
          d["by_kind"] = by_kind;
          return d;
        },
        py::arg("seed") = 0, py::arg("instances") = 20, py::arg("corrupt_backward") = false);

  m.def("train_synthetic",
        [](std::uint64_t seed, std::size_t epochs, double reg, const std::string& layers,
           const std::string& output_dir, unsigned threads) {
          cli::TrainOptions o;
          o.seed = seed;
          o.dataset.seed = seed;
          o.train.epochs = epochs;
          o.train.reg_coeff_base = reg;
          o.train.threads = threads;
          o.layers = layers;
          o.output_dir = output_dir;
          cli::TrainSummary s;
          {
            py::gil_scoped_release release;
            s = cli::run_train(o);
          }
          py::list history;
          for (const auto& e : s.result.history) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["train"] = split_metrics(e.train);
            d["validation"] = split_metrics(e.validation);
            history.append(d);
          }
          return py::make_tuple(Network{s.model, s.result.params}, history);
        },
        py::arg("seed") = 1, py::arg("epochs") = 30, py::arg("reg") = 0.1, py::arg("layers") = "",
        py::arg("output_dir") = "", py::arg("threads") = 1,
        "Trains on the synthetic 4-class task; returns (network, per-epoch metrics).");

  m.def("evaluate",
        [](const std::string& checkpoint_path, const std::string& split, unsigned threads) {
          cli::EvalOptions o;
          o.checkpoint = checkpoint_path;
          o.split = split;
          o.threads = threads;
          cli::EvalSummary s;
          {
            py::gil_scoped_release release;
            s = cli::run_eval(o);
          }
          py::dict d = split_metrics(s.metrics);
          d["examples"] = s.examples;
          return d;
        },
        py::arg("checkpoint"), py::arg("split") = "validation", py::arg("threads") = 1);
}
