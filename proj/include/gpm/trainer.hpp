#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpm/config.hpp"
#include "gpm/dataset.hpp"
#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "gpm/model.hpp"
#include "gpm/sampler.hpp"

namespace gpm {

struct IntervalRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;
  double pair_fraction = 0.0;
  double triplet_fraction = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  SamplingMode plan_mode = SamplingMode::random;
  std::size_t n_tuples = 0;
  bool plan_is_partition = false;
  std::size_t n_steps = 0;
  double mean_loss = 0.0;
  /// Mean over the epoch's batches of the per-batch informative fractions.
  double pair_fraction = 0.0;
  double triplet_fraction = 0.0;
  std::size_t degenerate_proxies = 0;
  double plan_seconds = 0.0;
  double epoch_seconds = 0.0;
  std::optional<RecallReport> recall;
};

/// Hooks for logging and output files; all default to no-ops.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_message(const std::string&) {}
  virtual void on_plan(const BatchPlan&) {}
  virtual void on_interval(const IntervalRecord&) {}
  virtual void on_epoch(const EpochRecord&, const TwoBranchModel&, const MemoryBank&) {}
  virtual void on_abort(const std::string&, const TwoBranchModel&) {}
};

struct TrainResult {
  TwoBranchModel model;
  MemoryBank bank;
  std::vector<EpochRecord> epochs;
  std::vector<IntervalRecord> intervals;
  RecallReport final_recall;
  CostReport cost;
};

/// Thrown when the loss or gradients stop being finite.
class TrainingAborted : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Runs the training loop on `train_set` and evaluates on `eval`. Per
/// iteration: assemble batch, forward x and z, per-place proxies into the
/// bank, loss on both branches, backward, SGD step. Per epoch: a new plan
/// from the bank.
TrainResult train(const RunConfig& cfg, const PlaceDataset& train_set, const EvalSplit& eval,
                  TrainObserver* observer = nullptr);

/// Dataset (generated or loaded per cfg) plus its holdout split.
struct PreparedData {
  PlaceDataset full;
  HoldoutSplit split;
};

PreparedData prepare_data(const RunConfig& cfg);

/// prepare_data + train, with model.input_dim taken from the dataset.
TrainResult run_experiment(RunConfig cfg, TrainObserver* observer = nullptr);

}  // namespace gpm
