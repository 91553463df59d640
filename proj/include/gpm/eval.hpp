#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "gpm/dataset.hpp"
#include "gpm/model.hpp"
#include "gpm/numerics.hpp"
#include "gpm/sampler.hpp"

namespace gpm {

struct RecallReport {
  std::map<int, double> recall_at;
  std::size_t n_queries = 0;
  std::size_t n_references = 0;

  double at(int k) const { return recall_at.at(k); }
  friend bool operator==(const RecallReport&, const RecallReport&) = default;
};

inline const std::vector<int> kDefaultRecallKs{1, 5, 10};

/// Retrieval recall over precomputed, unit-norm embeddings. A query is a hit
/// at K if any of its K most similar references (ties broken by reference
/// index) belongs to its place.
RecallReport recall_at_k(const Matrix& query_emb, std::span<const PlaceId> query_places,
                         const Matrix& reference_emb, std::span<const PlaceId> reference_places,
                         std::span<const int> ks = kDefaultRecallKs);

/// Recall of the main-branch embeddings; the proxy head is not used.
RecallReport recall_at_k(const Encoder& encoder, const EvalSplit& split,
                         std::span<const int> ks = kDefaultRecallKs);

struct CostReport {
  std::int64_t proxy_dim = 0;
  std::int64_t n_places = 0;
  std::uint64_t bytes_per_float = 4;
  std::uint64_t bank_bytes = 0;
  double plan_build_seconds = 0.0;
  double epoch_seconds = 0.0;

  double bank_gigabytes() const { return static_cast<double>(bank_bytes) / 1e9; }
};

struct Timings {
  double plan_build_seconds = 0.0;
  double epoch_seconds = 0.0;
};

/// n_places × proxy_dim × bytes_per_float.
std::uint64_t bank_bytes(std::int64_t n_places, std::int64_t proxy_dim, std::uint64_t bytes_per_float);

CostReport cost_report(const MemoryBank& bank, const Timings& timings, std::uint64_t bytes_per_float = 4);

}  // namespace gpm
