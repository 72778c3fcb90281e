// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "deltaspike/learn.hpp"

namespace deltaspike::learn::detail {

template <typename T>
struct ParamSlot {
  std::string name;
  std::span<T> values;
  ParamKind kind;
  std::vector<std::size_t> shape;
};

/// Fixed-order flat view of every trainable tensor.
std::vector<ParamSlot<double>> parameter_spans(net::NetworkParams& params);
std::vector<ParamSlot<const double>> parameter_spans(const net::NetworkParams& params);

}  // namespace deltaspike::learn::detail
