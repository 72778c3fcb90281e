// SPDX-License-Identifier: Apache-2.0
#include "params.hpp"

#include <algorithm>

namespace deltaspike::learn {

namespace detail {

namespace {

template <typename Params, typename T>
std::vector<ParamSlot<T>> collect(Params& params) {
  std::vector<ParamSlot<T>> slots;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    std::visit(
        [&](auto& p) {
          using L = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<L, net::FcLayerParams>) {
            slots.push_back({prefix + "weight", p.weight.values(), ParamKind::kWeight,
                             p.weight.shape()});
          } else {
            slots.push_back({prefix + "kernels", p.kernels.values(), ParamKind::kWeight,
                             p.kernels.shape()});
          }
          slots.push_back({prefix + "beta", std::span<T>(&p.beta, 1), ParamKind::kBeta, {1}});
          slots.push_back({prefix + "threshold", std::span<T>(p.threshold),
                           ParamKind::kThreshold, {p.threshold.size()}});
        },
        params.layers[l]);
  }
  slots.push_back({"readout.weight", params.readout.weight.values(),
                   ParamKind::kReadoutWeight, params.readout.weight.shape()});
  slots.push_back({"readout.bias", std::span<T>(params.readout.bias),
                   ParamKind::kReadoutBias, {params.readout.bias.size()}});
  return slots;
}

}  // namespace

std::vector<ParamSlot<double>> parameter_spans(net::NetworkParams& params) {
  return collect<net::NetworkParams, double>(params);
}

std::vector<ParamSlot<const double>> parameter_spans(const net::NetworkParams& params) {
  return collect<const net::NetworkParams, const double>(params);
}

}  // namespace detail

const char* param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kBeta: return "beta";
    case ParamKind::kThreshold: return "threshold";
    case ParamKind::kReadoutWeight: return "readout_weight";
    case ParamKind::kReadoutBias: return "readout_bias";
  }
  return "unknown";
}

void visit_parameters(
    net::NetworkParams& params,
    const std::function<void(const std::string&, std::span<double>, ParamKind)>& fn) {
  for (auto& slot : detail::parameter_spans(params)) fn(slot.name, slot.values, slot.kind);
}

void visit_parameters(
    const net::NetworkParams& params,
    const std::function<void(const std::string&, std::span<const double>, ParamKind)>& fn) {
  for (auto& slot : detail::parameter_spans(params)) fn(slot.name, slot.values, slot.kind);
}

net::NetworkParams zeros_like(const net::NetworkParams& params) {
  net::NetworkParams z = params;
  for (auto& slot : detail::parameter_spans(z)) {
    std::fill(slot.values.begin(), slot.values.end(), 0.0);
  }
  return z;
}

std::size_t parameter_count(const net::NetworkParams& params) {
  std::size_t n = 0;
  for (const auto& slot : detail::parameter_spans(params)) n += slot.values.size();
  return n;
}

}  // namespace deltaspike::learn
