#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oa/layers.hpp"
#include "oa/tensor.hpp"

namespace oa {

// Named-tensor checkpoint, little-endian:
//   "OACKPT1", u32 metadata length, metadata bytes (JSON text),
//   u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//   rank x u32 dims, numel x float64.
struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string serialize_checkpoint(const std::string& metadata, const ParamList& params);
Checkpoint parse_checkpoint(std::string_view bytes);

void write_checkpoint(const std::string& path, const std::string& metadata, const ParamList& params);
Checkpoint read_checkpoint(const std::string& path);

// Copies values into `targets` in place. Names and shapes must match one to
// one; throws std::runtime_error naming the first mismatch.
void load_parameters(const Checkpoint& ckpt, const ParamList& targets);

}  // namespace oa
