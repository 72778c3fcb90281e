// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container of named float64 tensors, used for model
// checkpoints and the feature cache.
//
// Layout (all integers little-endian):
//   "DSPK"                    magic
//   u32 version               currently 1
//   u32 kind length, kind     e.g. "checkpoint", "feature-cache"
//   u64 metadata length, metadata (UTF-8 JSON)
//   u32 tensor count
//   per tensor:
//     u32 name length, name
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]  (IEEE-754 binary64, little-endian)
#pragma once

#include <string>
#include <vector>

#include "deltaspike/net.hpp"
#include "deltaspike/tensor.hpp"

namespace deltaspike::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;

  bool operator==(const NamedTensor&) const = default;
};

struct Container {
  std::string kind;
  std::string metadata;  // JSON
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
  bool operator==(const Container&) const = default;
};

void write_container(const std::string& path, const Container& container);
Container read_container(const std::string& path);

struct Checkpoint {
  net::ModelConfig model;
  net::NetworkParams params;
  std::string extra;  // caller-defined JSON stored alongside the model
};

/// Metadata holds {"model": <ModelConfig>, "extra": <extra>}; tensors are the
/// trainable parameters under their visit_parameters names.
void save_checkpoint(const std::string& path, const net::ModelConfig& model,
                     const net::NetworkParams& params, const std::string& extra = "{}");
Checkpoint load_checkpoint(const std::string& path);

}  // namespace deltaspike::checkpoint
