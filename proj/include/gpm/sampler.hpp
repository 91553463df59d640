#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/dataset.hpp"
#include "gpm/numerics.hpp"

namespace gpm {

enum class SamplingMode { random, gpm };

std::string_view to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(std::string_view name);

struct SamplerConfig {
  /// Places per mini-batch.
  std::int64_t places_per_batch = 16;
  /// Images drawn from each place.
  std::int64_t images_per_place = 4;
  SamplingMode mode = SamplingMode::gpm;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean of the unit-norm proxy rows of one place, re-normalized. Throws
/// DegenerateInputError if the mean has (near) zero norm.
Vector compute_place_proxy(const Matrix& z_rows);

/// Cache of one detached proxy per place.
class MemoryBank {
 public:
  struct Entry {
    Vector proxy;
    int last_update_epoch = -1;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  /// Inserts or replaces the proxy of `place`. Throws PreconditionError if
  /// the proxy is not unit-norm, DimensionError if its length differs from
  /// earlier entries.
  void update(PlaceId place, std::span<const double> proxy, int epoch);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t proxy_dim() const { return dim_; }
  bool contains(PlaceId place) const { return entries_.count(place) != 0; }
  const Entry& at(PlaceId place) const;
  const std::map<PlaceId, Entry>& entries() const { return entries_; }

  /// Bytes needed to hold the cached proxies at the given precision.
  std::uint64_t bytes(std::uint64_t bytes_per_float) const;

  /// CSV dump: place_id,epoch,p0,...; values printed with round-trip precision.
  void save_csv(std::ostream& os) const;
  static MemoryBank load_csv(std::istream& is);

  friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

 private:
  std::map<PlaceId, Entry> entries_;
  std::size_t dim_ = 0;
};

/// Ordered place-id tuples consumed one per iteration during an epoch.
struct BatchPlan {
  std::vector<std::vector<PlaceId>> tuples;
  int epoch = 0;
  SamplingMode mode = SamplingMode::random;

  std::size_t n_places() const;
  /// True iff the tuples cover `places` exactly once each.
  bool is_partition_of(std::span<const PlaceId> places) const;

  /// One line per tuple, ids separated by spaces.
  void save(std::ostream& os) const;
  static BatchPlan load(std::istream& is);
};

struct ProxyRef {
  PlaceId id;
  std::span<const double> proxy;
};

/// Exhaustive inner-product search: the k references most similar to
/// `query`, most similar first, ties broken by smaller id. Throws
/// PreconditionError if k exceeds the reference count.
std::vector<PlaceId> knn_search(std::span<const ProxyRef> references,
                                std::span<const double> query, std::size_t k);

/// Greedy partition of the bank into tuples of mutually similar places:
/// pick a random remaining place, take it together with its
/// places_per_batch − 1 most similar remaining places, remove them, repeat.
/// The last tuple may be shorter. Deterministic given seed and bank.
BatchPlan build_batch_plan(const MemoryBank& bank, std::size_t places_per_batch, std::uint64_t seed);

/// Shuffled partition of `places` into consecutive tuples.
BatchPlan random_plan(std::span<const PlaceId> places, std::size_t places_per_batch, std::uint64_t seed);

/// Plan for the coming epoch: the random bootstrap while the bank does not
/// yet cover every place (always at epoch 0) or when cfg.mode is random,
/// otherwise the proxy-index plan built from the bank.
BatchPlan epoch_boundary(const MemoryBank& bank, std::span<const PlaceId> places, int epoch,
                         const SamplerConfig& cfg);

/// Per-epoch seed derived from the sampler seed.
std::uint64_t epoch_seed(std::uint64_t seed, int epoch);

struct BatchSlot {
  PlaceId place;
  std::vector<std::size_t> images;
};

/// Walks a plan tuple by tuple and draws images for each place.
class BatchSampler {
 public:
  BatchSampler(BatchPlan plan, std::uint64_t seed);

  /// The next batch, or nullopt once the plan is exhausted (end of epoch).
  /// Each place contributes images_per_place distinct images if it has that
  /// many, otherwise all of its images plus random repeats.
  std::optional<std::vector<BatchSlot>> next_batch(const PlaceDataset& ds,
                                                   std::size_t images_per_place);

  const BatchPlan& plan() const { return plan_; }
  std::size_t remaining() const { return plan_.tuples.size() - cursor_; }

 private:
  BatchPlan plan_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

/// Stacks the sampled images into a feature matrix with one label per row.
struct AssembledBatch {
  Matrix features;
  std::vector<std::int64_t> labels;
  std::vector<PlaceId> places;  // distinct, in batch order
};

AssembledBatch assemble_batch(const PlaceDataset& ds, std::span<const BatchSlot> slots);

}  // namespace gpm
