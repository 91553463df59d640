#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpm/config.hpp"
#include "gpm/losses.hpp"
#include "gpm/sampler.hpp"

namespace gpm {

struct AblationCell {
  LossKind loss = LossKind::multi_similarity;
  bool ohm = true;
  SamplingMode mode = SamplingMode::gpm;
  std::int64_t places_per_batch = 16;

  std::string name() const;
  RunConfig apply(RunConfig base) const;
};

struct CellRun {
  AblationCell cell;
  std::uint64_t seed = 0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  /// Per-epoch informative triplet fraction, from the training loop.
  std::vector<double> triplet_fractions;
  std::vector<double> pair_fractions;
  double seconds = 0.0;
};

struct CellSummary {
  AblationCell cell;
  std::size_t n_seeds = 0;
  double median_recall_at_1 = 0.0;
  double median_recall_at_5 = 0.0;
  double median_recall_at_10 = 0.0;
  double mean_triplet_fraction = 0.0;
  double mean_pair_fraction = 0.0;
};

/// Loss × OHM × sampling mode at the base batch size.
std::vector<AblationCell> loss_grid(const std::vector<LossKind>& losses, std::int64_t places_per_batch);
/// Sampling mode × M for one loss with OHM on.
std::vector<AblationCell> m_sweep_grid(LossKind loss, const std::vector<std::int64_t>& ms);

using AblationProgress = std::function<void(const CellRun&)>;

/// Trains every (cell, seed) pair, `threads` runs at a time. Results keep
/// the order cells × seeds regardless of scheduling.
std::vector<CellRun> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                  const std::vector<std::uint64_t>& seeds, int threads,
                                  const AblationProgress& progress = {});

double median(std::vector<double> values);

std::vector<CellSummary> summarize(const std::vector<CellRun>& runs);

void write_runs_csv(std::ostream& os, const std::vector<CellRun>& runs);
void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& summary);

}  // namespace gpm
