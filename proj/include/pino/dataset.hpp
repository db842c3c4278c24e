#pragma once

// Operator-learning pairs cut from a trajectory, the time split with its
// anti-leakage buffer, and spatial stride resampling.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pino/apsolver.hpp"
#include "pino/tensor.hpp"

namespace pino::data {

/// Frame indices (into the dataset's trajectory) of one training example.
struct SamplePair {
  std::vector<std::size_t> input;
  std::vector<std::size_t> target;

  std::size_t earliest() const { return input.front(); }
  std::size_t latest() const { return target.back(); }
  bool operator==(const SamplePair&) const = default;
};

struct DatasetConfig {
  std::size_t n = 1;  // offset from the last input frame to the first target frame
  std::size_t m = 0;  // 0: single-frame pairs; >= 2: windows of m+1 frames
  double fraction = 0.8;
  double start_ms = 0.0;
  double end_ms = std::numeric_limits<double>::quiet_NaN();  // NaN: through the last frame
  std::size_t downsample = 1;
  bool normalize = true;

  bool multi() const { return m > 0; }
  std::size_t frames_per_sample() const { return multi() ? m + 1 : 1; }
  std::size_t buffer() const { return 2 * n - 1; }
  void validate() const;
};

std::vector<SamplePair> build_single(std::size_t frames, std::size_t n);
std::vector<SamplePair> build_multi(std::size_t frames, std::size_t n, std::size_t m);

struct Split {
  std::vector<SamplePair> train, test;
  std::size_t cut = 0;
};

/// Train: latest index < cut; test: earliest index >= cut + buffer, with
/// cut = floor(fraction * frames). Throws if either side is empty.
Split split(const std::vector<SamplePair>& pairs, std::size_t frames, double fraction,
            std::size_t buffer);

/// Stride sampling keeping both endpoints; h scales by `factor`.
ap::Trajectory downsample(const ap::Trajectory& t, std::size_t factor);
/// Frames [first, first + count) of a trajectory.
ap::Trajectory slice_frames(const ap::Trajectory& t, std::size_t first, std::size_t count);

struct Dataset {
  DatasetConfig cfg;
  ap::Trajectory traj;  // windowed, resampled and normalised
  Split split;
  std::string source;  // originating trajectory file, if any
  std::uint32_t source_crc = 0;
  std::size_t first_frame = 0;  // offset of traj within the source

  std::size_t in_channels() const { return 2 * cfg.frames_per_sample() + 2; }
  std::size_t out_channels() const { return 2 * cfg.frames_per_sample(); }
};

Dataset make_dataset(const ap::Trajectory& source, const DatasetConfig& cfg);

/// Frames folded into channels frame-major (channel = frame * 2 + field):
/// one row of the batch per index list -> [B, 2 * L, H, W].
Tensor gather(const ap::Trajectory& t, std::span<const std::vector<std::size_t>> frames);
Tensor gather_inputs(const ap::Trajectory& t, std::span<const SamplePair> pairs);
Tensor gather_targets(const ap::Trajectory& t, std::span<const SamplePair> pairs);

/// True when consecutive pairs advance by exactly one frame.
bool time_contiguous(std::span<const SamplePair> pairs);

/// Writes `<dir>/<name>.manifest` and the frame data `<dir>/<name>.aptj`.
void write_dataset(const std::filesystem::path& dir, const std::string& name, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& manifest);

}  // namespace pino::data
