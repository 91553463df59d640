#include "gpm/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "gpm/errors.hpp"
#include "gpm/trainer.hpp"

namespace gpm {

std::string AblationCell::name() const {
  return std::string(to_string(loss)) + (ohm ? "+ohm" : "") + "/" + std::string(to_string(mode)) + "/M" +
         std::to_string(places_per_batch);
}

RunConfig AblationCell::apply(RunConfig base) const {
  base.loss.kind = loss;
  base.loss.ohm_enabled = ohm;
  base.sampler.mode = mode;
  base.sampler.places_per_batch = places_per_batch;
  return base;
}

std::vector<AblationCell> loss_grid(const std::vector<LossKind>& losses, std::int64_t places_per_batch) {
  std::vector<AblationCell> cells;
  for (LossKind loss : losses)
    for (bool ohm : {false, true})
      for (SamplingMode mode : {SamplingMode::random, SamplingMode::gpm})
        cells.push_back({loss, ohm, mode, places_per_batch});
  return cells;
}

std::vector<AblationCell> m_sweep_grid(LossKind loss, const std::vector<std::int64_t>& ms) {
  std::vector<AblationCell> cells;
  for (std::int64_t m : ms)
    for (SamplingMode mode : {SamplingMode::random, SamplingMode::gpm})
      cells.push_back({loss, true, mode, m});
  return cells;
}

std::vector<CellRun> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                  const std::vector<std::uint64_t>& seeds, int threads,
                                  const AblationProgress& progress) {
  if (cells.empty() || seeds.empty()) throw PreconditionError("ablation needs at least one cell and one seed");
  const std::size_t n_jobs = cells.size() * seeds.size();
  std::vector<CellRun> runs(n_jobs);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t j = next++; j < n_jobs; j = next++) {
      const AblationCell& cell = cells[j / seeds.size()];
      const std::uint64_t seed = seeds[j % seeds.size()];
      try {
        RunConfig cfg = cell.apply(base);
        cfg.set_seed(seed);
        const auto start = std::chrono::steady_clock::now();
        const TrainResult result = run_experiment(cfg, nullptr);
        CellRun run;
        run.cell = cell;
        run.seed = seed;
        run.recall_at_1 = result.final_recall.at(1);
        run.recall_at_5 = result.final_recall.at(5);
        run.recall_at_10 = result.final_recall.at(10);
        for (const EpochRecord& e : result.epochs) {
          run.triplet_fractions.push_back(e.triplet_fraction);
          run.pair_fractions.push_back(e.pair_fraction);
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        runs[j] = run;
        std::lock_guard lock(mu);
        if (progress) progress(run);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n_jobs;
      }
    }
  };

  const int n_threads = std::clamp<int>(threads, 1, static_cast<int>(n_jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return runs;
}

double median(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<CellSummary> summarize(const std::vector<CellRun>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CellRun*>> groups;
  for (const CellRun& r : runs) {
    const std::string key = r.cell.name();
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const std::string& key : order) {
    const auto& group = groups[key];
    std::vector<double> r1, r5, r10, trip, pair;
    for (const CellRun* r : group) {
      r1.push_back(r->recall_at_1);
      r5.push_back(r->recall_at_5);
      r10.push_back(r->recall_at_10);
      trip.push_back(mean_of(r->triplet_fractions));
      pair.push_back(mean_of(r->pair_fractions));
    }
    CellSummary s;
    s.cell = group.front()->cell;
    s.n_seeds = group.size();
    s.median_recall_at_1 = median(r1);
    s.median_recall_at_5 = median(r5);
    s.median_recall_at_10 = median(r10);
    s.mean_triplet_fraction = mean_of(trip);
    s.mean_pair_fraction = mean_of(pair);
    out.push_back(s);
  }
  return out;
}

void write_runs_csv(std::ostream& os, const std::vector<CellRun>& runs) {
  os << std::setprecision(17)
     << "loss,ohm,sampling,M,seed,recall@1,recall@5,recall@10,"
        "fraction_informative_triplets,fraction_informative_pairs,seconds\n";
  for (const CellRun& r : runs) {
    os << to_string(r.cell.loss) << ',' << (r.cell.ohm ? 1 : 0) << ',' << to_string(r.cell.mode) << ','
       << r.cell.places_per_batch << ',' << r.seed << ',' << r.recall_at_1 << ',' << r.recall_at_5 << ','
       << r.recall_at_10 << ',' << mean_of(r.triplet_fractions) << ',' << mean_of(r.pair_fractions) << ','
       << r.seconds << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& summary) {
  os << std::setprecision(17)
     << "loss,ohm,sampling,M,n_seeds,recall@1,recall@5,recall@10,"
        "fraction_informative_triplets,fraction_informative_pairs\n";
  for (const CellSummary& s : summary) {
    os << to_string(s.cell.loss) << ',' << (s.cell.ohm ? 1 : 0) << ',' << to_string(s.cell.mode) << ','
       << s.cell.places_per_batch << ',' << s.n_seeds << ',' << s.median_recall_at_1 << ','
       << s.median_recall_at_5 << ',' << s.median_recall_at_10 << ',' << s.mean_triplet_fraction << ','
       << s.mean_pair_fraction << '\n';
  }
}

}  // namespace gpm
