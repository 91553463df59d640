#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>

#include "gpm/config.hpp"
#include "gpm/eval.hpp"
#include "gpm/trainer.hpp"

namespace gpm {

/// Writes the files of one training run into an output directory:
///   config.txt      config snapshot (re-loadable with --config)
///   metrics.csv     one row per epoch, recall columns when evaluated
///   fractions.csv   one row per logging interval
///   cost.csv        bank size and timings
///   checkpoint_epoch<N>.bin, model.bin, bank.csv, plan_epoch<N>.txt (optional)
class RunWriter : public TrainObserver {
 public:
  RunWriter(std::filesystem::path out_dir, const RunConfig& cfg, std::ostream* log);

  void on_message(const std::string& msg) override;
  void on_plan(const BatchPlan& plan) override;
  void on_interval(const IntervalRecord& rec) override;
  void on_epoch(const EpochRecord& rec, const TwoBranchModel& model, const MemoryBank& bank) override;
  void on_abort(const std::string& diagnostic, const TwoBranchModel& model) override;

  /// Final model, bank dump and cost report.
  void finish(const TrainResult& result);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  RunConfig cfg_;
  std::ostream* log_;
  std::ofstream metrics_;
  std::ofstream fractions_;
};

void write_recall_header(std::ostream& os);
void write_recall_row(std::ostream& os, const RecallReport& r);

void write_cost_csv(std::ostream& os, const CostReport& c);

}  // namespace gpm
