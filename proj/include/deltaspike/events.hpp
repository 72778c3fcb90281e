// SPDX-License-Identifier: Apache-2.0
//
// Send-on-delta event coding: the scalar sampler, its two-neuron
// integrate-and-fire realization, and the multi-dimensional encoder whose
// neurons reset each other through lateral weights -<w_i, w_j>.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "deltaspike/tensor.hpp"

namespace deltaspike::events {

struct Event {
  std::size_t step = 0;
  std::size_t neuron = 0;

  bool operator==(const Event&) const = default;
};

inline constexpr std::size_t kOnNeuron = 0;
inline constexpr std::size_t kOffNeuron = 1;

/// Ordered (step, neuron) events. Steps are non-decreasing and, within a
/// step, neurons are strictly increasing.
class EventStream {
 public:
  EventStream(std::size_t n_steps, std::size_t n_neurons);

  /// Appends an event, enforcing the ordering and range invariants.
  void push(std::size_t step, std::size_t neuron);

  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_neurons() const noexcept { return n_neurons_; }
  const std::vector<Event>& events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }

  bool operator==(const EventStream&) const = default;

 private:
  std::size_t n_steps_;
  std::size_t n_neurons_;
  std::vector<Event> events_;
};

/// Header line `n_steps,n_neurons`, then one `step,neuron` record per line.
void write_event_stream(std::ostream& out, const EventStream& stream);
EventStream read_event_stream(std::istream& in);

enum class ReferenceMode {
  kValue,  // reference jumps to the sampled value x[n]
  kDelta,  // reference moves by +/-delta, carrying the overshoot
};

EventStream sod_sample(std::span<const double> signal, double delta,
                       ReferenceMode mode = ReferenceMode::kDelta);

/// Piecewise-constant decoder for delta-reference streams.
std::vector<double> sod_reconstruct(const EventStream& stream, double x0,
                                    double delta,
                                    std::size_t expected_steps = 0);

/// Two non-leaky IF neurons driven by w_k * (x[n] - x[n-1]); thresholds
/// w_k^2, self reset -w_k^2 and mutual reset -w_on*w_off, applied one step
/// after the spike.
EventStream if_sod_encode(std::span<const double> signal, double w_on,
                          double w_off);

/// Sampling directions w_i (rows), with thresholds ||w_i||^2 and lateral
/// weights -<w_i, w_j>.
class DirectionBank {
 public:
  /// `directions` is n_neurons x signal_dim. Zero rows are rejected.
  explicit DirectionBank(Tensor directions);

  std::size_t n_neurons() const noexcept { return directions_.dim(0); }
  std::size_t signal_dim() const noexcept { return directions_.dim(1); }
  const Tensor& directions() const noexcept { return directions_; }
  double threshold(std::size_t i) const noexcept { return gram_.at(i, i); }
  double lateral(std::size_t i, std::size_t j) const noexcept {
    return -gram_.at(i, j);
  }
  /// <w_i, w_j>; the reset subtracted from neuron i when j fires.
  double gram(std::size_t i, std::size_t j) const noexcept {
    return gram_.at(i, j);
  }
  std::span<const double> direction(std::size_t i) const noexcept {
    return {directions_.data() + i * signal_dim(), signal_dim()};
  }

  /// Rows +e_d and -e_d for every dimension d, scaled by delta: independent
  /// per-dimension send-on-delta.
  static DirectionBank axes(std::size_t dim, double delta);

 private:
  Tensor directions_;
  Tensor gram_;
};

struct EncodeTrace {
  EventStream events;
  Tensor potentials;  // [T x n_neurons], after the threshold check at step n
};

/// Multi-dimensional encoder. `signal` is [T x m]. With leak_beta = 1 the
/// potentials satisfy U_i[n] = <w_i, x[n] - x_hat[n]> exactly (up to
/// rounding); leak_beta < 1 decays the potential before integrating.
EventStream multidim_sod_encode(const Tensor& signal, const DirectionBank& bank,
                                double leak_beta = 1.0);
EncodeTrace multidim_sod_encode_traced(const Tensor& signal,
                                       const DirectionBank& bank,
                                       double leak_beta = 1.0);

/// x_hat[0] = x0; x_hat[n+1] = x_hat[n] + sum of w_i over neurons fired at n.
Tensor reference_trajectory(const EventStream& stream, const DirectionBank& bank,
                            std::span<const double> x0);

}  // namespace deltaspike::events
