#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "oa/experiment.hpp"

namespace oa {

// Everything a training run needs, as read from a JSON config file.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  std::string protocol = "cv";  // "cv" or "fixed"
  std::size_t repeats = 10;     // fixed-split repetitions
  std::size_t jobs = 1;
  bool save_checkpoints = true;
  std::string data, test_data;

  // Copies the shared fields (d, dropout, max_len, variant) into `model`.
  void sync();
  void validate() const;
};

// All keys optional; unknown keys throw std::invalid_argument.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);
// Pretty-printed JSON with every key spelled out.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace oa
