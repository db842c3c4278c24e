#pragma once

// Training losses: relative data loss, the Aliev-Panfilov residual on
// predicted frames, boundary and initial-condition penalties, and the
// adaptive weighting schemes.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pino/apsolver.hpp"
#include "pino/tensor.hpp"

namespace pino::loss {

/// Batch mean of per-sample ||pred - target|| / ||target|| over all trailing
/// dimensions.
Var relative_l2(const Var& pred, const Var& target);

struct ResidualSpec {
  ap::Params params;
  double h_mm = 1.0;
  double dt_au = 5.0 / ap::kMsPerAu;  // spacing of consecutive frames
  bool include_rhs = true;            // false leaves only the time derivative
};

struct Residual {
  Var v, w;  // [S, L-2, 1, H, W]
};

/// Central-difference residual on interior frames of `frames`
/// [S, L, 2, H, W] (S independent sequences of L time-ordered frames).
Residual pde_residual(const Var& frames, const ResidualSpec& spec);

/// Views a multi-frame prediction [B, 2L, H, W] as [B, L, 2, H, W].
Var as_sequences(const Var& pred);
/// Views a time-ordered single-frame batch [B, 2, H, W] as [1, B, 2, H, W].
Var as_one_sequence(const Var& pred);

/// w_v * mean(res_v^2) + w_w * mean(res_w^2).
Var residual_loss(const Residual& r, double w_v, double w_w);
/// Mean squared one-sided normal derivative on the four edges, all channels.
Var boundary_loss(const Var& pred, double h_mm);
/// Mean squared error between the first predicted frame (channels 0, 1) and
/// the first ground-truth target frame.
Var initial_loss(const Var& pred, const Var& target);

enum class Scheme : std::uint8_t { fixed = 0, softadapt = 1, reladapt = 2 };
std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view tag);

enum Component : std::size_t { kData = 0, kRes = 1, kIc = 2, kBc = 3 };
inline constexpr std::size_t kComponents = 4;
using Values = std::array<double, kComponents>;

struct LossWeights {
  Scheme scheme = Scheme::fixed;
  Values initial{1.0, 0.01, 0.1, 0.1};  // lambda_data, lambda_res, lambda_ic, lambda_bc
  Values multiplier{1.0, 1.0, 1.0, 1.0};
  std::array<bool, kComponents> active{true, true, true, true};
  double w_v = 2.0, w_w = 1.0;

  double beta = 0.1;         // softadapt
  double tau = 1.0;          // reladapt temperature
  double alpha = 0.999;      // reladapt memory
  double reset_prob = 0.01;  // reladapt lookback reset
  std::uint64_t seed = 0;

  Values previous{};
  bool has_previous = false;
  std::uint64_t updates = 0;
  std::uint64_t skipped = 0;
  std::mt19937_64 rng{0};

  Values lambdas() const;
  std::size_t active_count() const;
  void reseed(std::uint64_t s) { seed = s; rng.seed(s); }

  std::vector<std::uint8_t> serialize() const;
  static LossWeights deserialize(const std::vector<std::uint8_t>& bytes);
  bool operator==(const LossWeights& o) const;
};

/// Applies one scheme update from the latest per-component losses.
/// Non-finite components skip the update (counted in `skipped`).
void update_weights(LossWeights& w, const Values& latest);

}  // namespace pino::loss
