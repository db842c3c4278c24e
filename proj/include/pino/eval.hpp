#pragma once

// Evaluation protocols: point-to-point, autoregressive roll-out, resolution
// and scenario transfer, collapse detection, speed comparison, and the
// report/snapshot writers.

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pino/dataset.hpp"
#include "pino/fno.hpp"
#include "pino/tensor.hpp"

namespace pino::eval {

/// Maps model input [B, 2L, H, W] (no coordinate channels) to [B, 2L, H, W].
using Predictor = std::function<Tensor(const Tensor&)>;

Predictor predictor(const fno::Model& model);
/// Predictor that answers with ground truth frames of `t`: each input window
/// is located in the trajectory and the frames `offset` steps later returned.
Predictor oracle(const ap::Trajectory& t, std::size_t offset);

/// Root mean square of a - b.
double rmse(std::span<const double> a, std::span<const double> b);

struct Collapse {
  double pred_below = 0.2;
  double truth_above = 0.5;
  std::size_t frames = 5;
};

struct EvalReport {
  std::string scenario;         // data the model was evaluated on
  std::string source_scenario;  // data the model was trained on
  std::string model_id;
  std::string mode;  // "p2p" or "rollout"
  std::vector<double> frame_time_ms;
  std::vector<double> frame_rmse;
  double rmse = 0.0;  // pooled over every evaluated voltage value
  bool collapsed = false;
  std::size_t collapse_frame = 0;
  std::pair<std::size_t, std::size_t> best_cell{0, 0}, worst_cell{0, 0};  // (row, col)
  double inference_s = 0.0;
  double solver_s = 0.0;
};

/// Pooled voltage RMSE over the target frames of `pairs`, predicted from
/// ground truth inputs. Rows of frame_rmse follow the pairs.
EvalReport eval_p2p(const Predictor& f, const ap::Trajectory& t, std::span<const data::SamplePair> pairs,
                    std::size_t batch = 8);
EvalReport eval_p2p(const fno::Model& model, const ap::Trajectory& t, std::span<const data::SamplePair> pairs,
                    std::size_t batch = 8);

/// Feeds predictions back as inputs starting from ground truth `start`,
/// for `steps` model calls (clipped to the trajectory). One row per
/// predicted frame.
EvalReport eval_rollout(const Predictor& f, const ap::Trajectory& t, const data::SamplePair& start,
                        std::size_t steps, const Collapse& rule = {});

/// Sets collapsed/collapse_frame from per-frame spatial maxima.
void detect_collapse(EvalReport& r, std::span<const double> pred_max, std::span<const double> true_max,
                     const Collapse& rule);

struct ResolutionRow {
  double factor;
  std::size_t grid;
  double rmse;
  double degradation_pct;  // relative to factor 1
};

/// P2P on the test pairs of `cfg` applied to `full` at strides
/// base/factor for factors {1, 1.25, 2.5, 5, 10} (base = 10 on 401 points).
std::vector<ResolutionRow> eval_resolution(const Predictor& f, const ap::Trajectory& full,
                                           const data::DatasetConfig& cfg, std::size_t base_stride = 10);
std::string resolution_csv(const std::vector<ResolutionRow>& rows);

/// Pearson correlation of two fields.
double correlation(std::span<const double> a, std::span<const double> b);

struct SpeedReport {
  std::vector<double> solver_s, model_s;
  double solver_median = 0.0, model_median = 0.0, ratio = 0.0;
  double solver_mad_pct = 0.0, model_mad_pct = 0.0;
};

/// Median of `repeats` wall-clock runs of each callable.
SpeedReport benchmark_speed(const std::function<void()>& solver, const std::function<void()>& model,
                            std::size_t repeats = 5);

std::string metrics_csv(const EvalReport& r);
std::string report_meta(const EvalReport& r);
void write_pgm(const std::filesystem::path& path, std::span<const double> v, std::size_t H, std::size_t W);
std::string snapshot_name(const std::string& scenario, const std::string& mode, double t_ms);

}  // namespace pino::eval
