#pragma once

// Two-stage training: data-only, then data plus physics. Adam with a cosine
// learning-rate schedule, best-model tracking on test P2P RMSE, and
// resumable checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pino/dataset.hpp"
#include "pino/fno.hpp"
#include "pino/losses.hpp"

namespace pino::train {

struct TrainConfig {
  double lr0 = 5e-4;
  std::size_t epochs = 1000;
  std::size_t batch = 0;  // 0: 8 for multi-frame, 16 for single-frame
  std::uint64_t seed = 0;
  int stage = 1;
  loss::Scheme scheme = loss::Scheme::fixed;
  loss::Values lambdas{1.0, 0.01, 0.1, 0.1};
  std::size_t eval_every = 10;
  std::size_t checkpoint_every = 0;  // 0: only when train_stage finishes
  std::filesystem::path checkpoint;  // empty: no checkpoint files

  std::size_t batch_for(bool multi) const { return batch ? batch : (multi ? 8 : 16); }
  void validate() const;
};

/// lr0 * (1 + cos(pi * epoch / epochs)) / 2, floored at 0.
double lr_at(std::size_t epoch, std::size_t epochs, double lr0);

class Adam {
 public:
  Adam() = default;
  explicit Adam(const fno::Model& model);

  void step(fno::Model& model, const std::vector<Tensor>& grads, double lr);
  std::uint64_t steps() const { return t_; }

  std::vector<std::uint8_t> serialize() const;
  static Adam deserialize(const std::vector<std::uint8_t>& bytes);
  bool operator==(const Adam&) const = default;

  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

 private:
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct HistoryRow {
  int stage = 1;
  std::size_t epoch = 0;
  double lr = 0.0;
  loss::Values components{};  // epoch means of L_data, L_res, L_ic, L_bc
  loss::Values lambdas{};
  double total = 0.0;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
  TrainState(fno::Model m, Adam o, loss::LossWeights w)
      : model(std::move(m)), opt(std::move(o)), weights(std::move(w)) {}

  fno::Model model;
  Adam opt;
  loss::LossWeights weights;
  int stage = 1;
  std::size_t epoch = 0;  // next epoch to run
  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<Tensor> best_params;
  std::vector<HistoryRow> history;

  /// Fresh optimiser and weight state for `cfg.stage` around `model`.
  static TrainState start(fno::Model model, const TrainConfig& cfg, bool multi);
  fno::Model best_model() const;
};

/// One pass over the training pairs. Throws NumericalError naming the epoch
/// and batch on a non-finite loss.
HistoryRow run_epoch(TrainState& st, const data::Dataset& ds, const TrainConfig& cfg);

using EpochCallback = std::function<void(const HistoryRow&)>;

/// Runs epochs until st.epoch == cfg.epochs, evaluating every eval_every
/// epochs and at the last one, and checkpointing per cfg.
void train_stage(TrainState& st, const data::Dataset& ds, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Test-set P2P voltage RMSE.
double test_rmse(const fno::Model& model, const data::Dataset& ds, std::size_t batch = 8);

void save_state(const std::filesystem::path& path, const TrainState& st);
/// Restores a checkpoint; files without training blocks give a fresh state
/// around the stored model.
TrainState load_state(const std::filesystem::path& path, const fno::FnoConfig* expect = nullptr);

std::string history_csv(const std::vector<HistoryRow>& rows);
std::string loss_csv(const std::vector<HistoryRow>& rows);

}  // namespace pino::train
