// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "deltaspike/tensor.hpp"

namespace deltaspike {

/// One input sequence, [T x F x C], with its class.
struct LabeledExample {
  Tensor features;
  int label = 0;
  std::string source;  // file path or generator tag
};

struct DatasetSplits {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  std::vector<std::string> class_names;
};

}  // namespace deltaspike
