// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/events.hpp"

#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace deltaspike::events {

EventStream::EventStream(std::size_t n_steps, std::size_t n_neurons)
    : n_steps_(n_steps), n_neurons_(n_neurons) {}

void EventStream::push(std::size_t step, std::size_t neuron) {
  if (step >= n_steps_ || neuron >= n_neurons_) {
    throw ParameterError("event (" + std::to_string(step) + "," +
                         std::to_string(neuron) + ") out of range");
  }
  if (!events_.empty()) {
    const Event& last = events_.back();
    if (step < last.step || (step == last.step && neuron <= last.neuron)) {
      throw ParameterError("events must be ordered by (step, neuron)");
    }
  }
  events_.push_back({step, neuron});
}

void write_event_stream(std::ostream& out, const EventStream& stream) {
  out << stream.n_steps() << ',' << stream.n_neurons() << '\n';
  for (const Event& e : stream.events()) {
    out << e.step << ',' << e.neuron << '\n';
  }
}

namespace {

bool parse_pair(const std::string& line, std::size_t& a, std::size_t& b) {
  const auto comma = line.find(',');
  if (comma == std::string::npos) return false;
  try {
    std::size_t used = 0;
    const std::string lhs = line.substr(0, comma);
    const std::string rhs = line.substr(comma + 1);
    if (lhs.empty() || rhs.empty() || lhs[0] == '-' || rhs[0] == '-') {
      return false;
    }
    a = std::stoull(lhs, &used);
    if (used != lhs.size()) return false;
    b = std::stoull(rhs, &used);
    while (used < rhs.size() && std::isspace(static_cast<unsigned char>(rhs[used]))) {
      ++used;
    }
    return used == rhs.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

EventStream read_event_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("event stream: missing header");
  std::size_t n_steps = 0, n_neurons = 0;
  if (!parse_pair(line, n_steps, n_neurons)) {
    throw DataError("event stream: malformed header '" + line + "'");
  }
  EventStream stream(n_steps, n_neurons);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t step = 0, neuron = 0;
    if (!parse_pair(line, step, neuron)) {
      throw DataError("event stream: malformed record at line " +
                      std::to_string(lineno));
    }
    try {
      stream.push(step, neuron);
    } catch (const ParameterError& e) {
      throw DataError("event stream line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return stream;
}

EventStream sod_sample(std::span<const double> signal, double delta,
                       ReferenceMode mode) {
  if (!(delta > 0.0)) throw ParameterError("sod_sample: delta must be > 0");
  if (signal.empty()) throw ParameterError("sod_sample: empty signal");

  EventStream stream(signal.size(), 2);
  double ref = signal[0];
  for (std::size_t n = 1; n < signal.size(); ++n) {
    const double x = signal[n];
    if (x - ref >= delta) {
      stream.push(n, kOnNeuron);
      ref = mode == ReferenceMode::kValue ? x : ref + delta;
    } else if (ref - x >= delta) {
      stream.push(n, kOffNeuron);
      ref = mode == ReferenceMode::kValue ? x : ref - delta;
    }
  }
  return stream;
}

std::vector<double> sod_reconstruct(const EventStream& stream, double x0,
                                    double delta, std::size_t expected_steps) {
  if (!(delta > 0.0)) throw ParameterError("sod_reconstruct: delta must be > 0");
  if (stream.n_neurons() != 2) {
    throw ParameterError("sod_reconstruct: expected an ON/OFF stream");
  }
  if (expected_steps != 0 && expected_steps != stream.n_steps()) {
    throw ParameterError("sod_reconstruct: stream has " +
                         std::to_string(stream.n_steps()) + " steps, expected " +
                         std::to_string(expected_steps));
  }
  std::vector<double> out(stream.n_steps(), x0);
  double level = x0;
  auto it = stream.events().begin();
  for (std::size_t n = 0; n < out.size(); ++n) {
    for (; it != stream.events().end() && it->step == n; ++it) {
      level += it->neuron == kOnNeuron ? delta : -delta;
    }
    out[n] = level;
  }
  return out;
}

EventStream if_sod_encode(std::span<const double> signal, double w_on,
                          double w_off) {
  if (!(w_on > 0.0) || !(w_off < 0.0)) {
    throw ParameterError("if_sod_encode: need w_on > 0 > w_off");
  }
  if (signal.empty()) throw ParameterError("if_sod_encode: empty signal");

  const double theta_on = w_on * w_on;
  const double theta_off = w_off * w_off;
  const double lateral = w_on * w_off;

  EventStream stream(signal.size(), 2);
  double u_on = 0.0, u_off = 0.0;
  bool fired_on = false, fired_off = false;
  for (std::size_t n = 1; n < signal.size(); ++n) {
    double r_on = 0.0, r_off = 0.0;
    if (fired_on) {
      r_on += theta_on;
      r_off += lateral;
    }
    if (fired_off) {
      r_on += lateral;
      r_off += theta_off;
    }
    const double dx = signal[n] - signal[n - 1];
    u_on = (u_on - r_on) + w_on * dx;
    u_off = (u_off - r_off) + w_off * dx;
    fired_on = u_on >= theta_on;
    fired_off = u_off >= theta_off;
    if (fired_on) stream.push(n, kOnNeuron);
    if (fired_off) stream.push(n, kOffNeuron);
  }
  return stream;
}

DirectionBank::DirectionBank(Tensor directions)
    : directions_(std::move(directions)) {
  if (directions_.rank() != 2 || directions_.dim(0) == 0 ||
      directions_.dim(1) == 0) {
    throw ParameterError("direction bank must be a non-empty matrix");
  }
  const std::size_t n = directions_.dim(0);
  const std::size_t m = directions_.dim(1);
  for (double v : directions_.values()) {
    if (!std::isfinite(v)) throw ParameterError("direction bank: non-finite entry");
  }
  gram_ = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < m; ++d) {
        dot += directions_.at(i, d) * directions_.at(j, d);
      }
      gram_.at(i, j) = dot;
      gram_.at(j, i) = dot;
    }
    if (!(gram_.at(i, i) > 0.0)) {
      throw ParameterError("direction bank: row " + std::to_string(i) +
                           " has zero norm");
    }
  }
}

DirectionBank DirectionBank::axes(std::size_t dim, double delta) {
  if (!(delta > 0.0)) throw ParameterError("axes bank: delta must be > 0");
  Tensor w({2 * dim, dim});
  for (std::size_t d = 0; d < dim; ++d) {
    w.at(2 * d, d) = delta;
    w.at(2 * d + 1, d) = -delta;
  }
  return DirectionBank(std::move(w));
}

EncodeTrace multidim_sod_encode_traced(const Tensor& signal,
                                       const DirectionBank& bank,
                                       double leak_beta) {
  if (signal.rank() != 2 || signal.dim(1) != bank.signal_dim()) {
    throw ParameterError("multidim_sod_encode: signal is " +
                         shape_string(signal.shape()) + ", bank expects dim " +
                         std::to_string(bank.signal_dim()));
  }
  if (signal.dim(0) == 0) throw ParameterError("multidim_sod_encode: empty signal");
  if (!(leak_beta >= 0.0 && leak_beta <= 1.0)) {
    throw ParameterError("multidim_sod_encode: leak_beta must be in [0, 1]");
  }

  const std::size_t steps = signal.dim(0);
  const std::size_t m = signal.dim(1);
  const std::size_t n = bank.n_neurons();

  EncodeTrace out{EventStream(steps, n), Tensor({steps, n})};
  std::vector<double> u(n, 0.0);
  std::vector<std::size_t> fired, next_fired;
  for (std::size_t t = 0; t < steps; ++t) {
    next_fired.clear();
    for (std::size_t i = 0; i < n; ++i) {
      double reset = 0.0;
      for (std::size_t j : fired) reset += bank.gram(i, j);
      double drive = 0.0;
      if (t > 0) {
        const auto w = bank.direction(i);
        for (std::size_t d = 0; d < m; ++d) {
          drive += w[d] * (signal.at(t, d) - signal.at(t - 1, d));
        }
      }
      u[i] = leak_beta * (u[i] - reset) + drive;
      out.potentials.at(t, i) = u[i];
      if (u[i] >= bank.threshold(i)) {
        next_fired.push_back(i);
        out.events.push(t, i);
      }
    }
    fired.swap(next_fired);
  }
  return out;
}

EventStream multidim_sod_encode(const Tensor& signal, const DirectionBank& bank,
                                double leak_beta) {
  return multidim_sod_encode_traced(signal, bank, leak_beta).events;
}

Tensor reference_trajectory(const EventStream& stream, const DirectionBank& bank,
                            std::span<const double> x0) {
  if (x0.size() != bank.signal_dim()) {
    throw ParameterError("reference_trajectory: x0 has dim " +
                         std::to_string(x0.size()) + ", bank expects " +
                         std::to_string(bank.signal_dim()));
  }
  if (stream.n_neurons() != bank.n_neurons()) {
    throw ParameterError("reference_trajectory: stream/bank neuron count mismatch");
  }
  const std::size_t steps = stream.n_steps();
  const std::size_t m = bank.signal_dim();
  Tensor x_hat({steps, m});
  std::vector<double> level(x0.begin(), x0.end());
  auto it = stream.events().begin();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t d = 0; d < m; ++d) x_hat.at(t, d) = level[d];
    for (; it != stream.events().end() && it->step == t; ++it) {
      const auto w = bank.direction(it->neuron);
      for (std::size_t d = 0; d < m; ++d) level[d] += w[d];
    }
  }
  return x_hat;
}

}  // namespace deltaspike::events
