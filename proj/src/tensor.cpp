// SPDX-License-Identifier: Apache-2.0
#include "deltaspike/tensor.hpp"

namespace deltaspike {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace deltaspike
