#pragma once

// Experiment configuration: `key = value` lines under [section] headers.
// Values resolve as flags > file > defaults. Every key is listed by
// `pino config` together with its default.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pino/apsolver.hpp"
#include "pino/dataset.hpp"
#include "pino/eval.hpp"
#include "pino/fno.hpp"
#include "pino/training.hpp"

namespace pino {

/// Bad flags, keys or values; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<ap::Scenario> scenarios{ap::Scenario::spiral};
  std::filesystem::path out = "pino-out";

  // [simulate]
  std::size_t grid = 101;
  double horizon_ms = 0.0;  // 0: scenario default
  double save_ms = 5.0;
  double s2_ms = 0.0;  // 0: scenario default
  ap::Units units = ap::Units::au;

  // [dataset]
  data::DatasetConfig dataset;

  // [model]
  std::size_t modes = 12, width = 32, blocks = 4;
  fno::Activation activation = fno::Activation::gelu;
  bool gating = true;

  // [train]
  train::TrainConfig train;
  std::size_t epochs_stage1 = 1000, epochs_stage2 = 1000;

  // [evaluate]
  std::size_t rollout_frames = 0;  // 0: to the end of the data
  eval::Collapse collapse;
  double snapshot_ms = 500.0;
  std::size_t full_grid = 401;
  std::size_t repeats = 5;
  double bench_horizon_ms = 1000.0;

  fno::FnoConfig model_config() const;
  /// Canonical text with every key, one per line, commented.
  std::string text() const;
  std::uint32_t hash() const;
};

using Overrides = std::map<std::string, std::string>;  // "section.key" -> value

/// Defaults, then `file` (if non-empty), then `flags`. Unknown keys and
/// unparsable values throw UsageError.
ExperimentConfig resolve_config(const std::filesystem::path& file, const Overrides& flags);

}  // namespace pino
