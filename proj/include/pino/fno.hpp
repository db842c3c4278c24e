#pragma once

// Fourier neural operator: grid embedding, lifting, gated spectral blocks
// with channel MLPs, and projection. Parameter shapes depend only on the
// configuration, never on the grid.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pino/tensor.hpp"

namespace pino::fno {

enum class Activation : std::uint8_t { gelu = 0, relu = 1 };

struct FnoConfig {
  std::size_t modes = 12;
  std::size_t width = 32;
  std::size_t blocks = 4;
  std::size_t in_channels = 4;   // data channels + 2 coordinate channels
  std::size_t out_channels = 2;
  Activation activation = Activation::gelu;
  bool gating = true;

  /// Single-frame (frames = 1) or multi-frame (frames = m + 1) layout.
  static FnoConfig for_frames(std::size_t frames, std::size_t modes = 12, std::size_t width = 32);
  std::size_t data_channels() const { return in_channels - 2; }
  void validate() const;
  bool operator==(const FnoConfig&) const = default;
};

std::string describe(const FnoConfig& c);

/// Appends normalised row and column coordinates in [0, 1] as two channels.
Var grid_embed(const Var& x);

struct Param {
  std::string name;
  Tensor value;
};

class Model {
 public:
  /// Seeded initialisation; identical seeds give bit-identical parameters.
  Model(const FnoConfig& cfg, std::uint64_t seed);
  Model(const FnoConfig& cfg, std::vector<Param> params);

  const FnoConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);
  std::size_t parameter_count() const;
  std::uint32_t checksum() const;

  /// Records the forward pass; `params` receives the parameter leaves in
  /// params() order so their gradients can be read after backward.
  Var forward(Tape& tape, const Var& input, std::vector<Var>* params = nullptr) const;
  /// Gradient-free evaluation.
  Tensor predict(const Tensor& input) const;

  /// Sets the final projection to zero so the model outputs zeros.
  void zero_projection();

 private:
  FnoConfig cfg_;
  std::vector<Param> params_;
};

using Extensions = std::vector<std::pair<std::string, std::vector<std::uint8_t>>>;

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Extensions& ext = {});

struct Checkpoint {
  Model model;
  Extensions extensions;
  const std::vector<std::uint8_t>* extension(const std::string& tag) const;
};

/// Throws DataError on corruption, or when `expect` is given and differs from
/// the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path, const FnoConfig* expect = nullptr);

}  // namespace pino::fno
