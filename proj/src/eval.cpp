#include "gpm/eval.hpp"

#include <algorithm>
#include <numeric>

#include "gpm/errors.hpp"

namespace gpm {

RecallReport recall_at_k(const Matrix& query_emb, std::span<const PlaceId> query_places,
                         const Matrix& reference_emb, std::span<const PlaceId> reference_places,
                         std::span<const int> ks) {
  if (query_emb.rows() == 0) throw PreconditionError("recall_at_k: empty query set");
  if (reference_emb.rows() == 0) throw PreconditionError("recall_at_k: empty reference set");
  if (query_emb.rows() != query_places.size() || reference_emb.rows() != reference_places.size()) {
    throw DimensionError("recall_at_k: label count differs from embedding rows");
  }
  if (query_emb.cols() != reference_emb.cols()) {
    throw DimensionError("recall_at_k: query and reference dimensions differ");
  }
  if (ks.empty()) throw PreconditionError("recall_at_k: no K values");
  for (int k : ks)
    if (k < 1) throw PreconditionError("recall_at_k: K must be >= 1");

  const std::size_t n_ref = reference_emb.rows();
  const auto max_k = std::min<std::size_t>(
      n_ref, static_cast<std::size_t>(*std::max_element(ks.begin(), ks.end())));

  // first_hit[q] = rank (0-based) of the first correct reference within the top max_k.
  std::vector<std::size_t> first_hit(query_emb.rows(), max_k);
  std::vector<double> sims(n_ref);
  std::vector<std::size_t> order(n_ref);
  for (std::size_t q = 0; q < query_emb.rows(); ++q) {
    const auto qrow = query_emb.row(q);
    for (std::size_t r = 0; r < n_ref; ++r) sims[r] = dot(qrow, reference_emb.row(r));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(max_k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return sims[a] != sims[b] ? sims[a] > sims[b] : a < b;
                      });
    for (std::size_t rank = 0; rank < max_k; ++rank) {
      if (reference_places[order[rank]] == query_places[q]) {
        first_hit[q] = rank;
        break;
      }
    }
  }

  RecallReport report;
  report.n_queries = query_emb.rows();
  report.n_references = n_ref;
  for (int k : ks) {
    const auto hits = std::count_if(first_hit.begin(), first_hit.end(),
                                    [&](std::size_t rank) { return rank < static_cast<std::size_t>(k); });
    report.recall_at[k] = static_cast<double>(hits) / static_cast<double>(report.n_queries);
  }
  return report;
}

RecallReport recall_at_k(const Encoder& encoder, const EvalSplit& split, std::span<const int> ks) {
  if (split.query_features.rows() == 0) throw PreconditionError("recall_at_k: empty query set");
  return recall_at_k(encoder.forward(split.query_features), split.query_places,
                     encoder.forward(split.reference_features), split.reference_places, ks);
}

std::uint64_t bank_bytes(std::int64_t n_places, std::int64_t proxy_dim, std::uint64_t bytes_per_float) {
  return static_cast<std::uint64_t>(n_places) * static_cast<std::uint64_t>(proxy_dim) * bytes_per_float;
}

CostReport cost_report(const MemoryBank& bank, const Timings& timings, std::uint64_t bytes_per_float) {
  if (bank.empty()) throw PreconditionError("cost_report: memory bank is empty");
  CostReport r;
  r.proxy_dim = static_cast<std::int64_t>(bank.proxy_dim());
  r.n_places = static_cast<std::int64_t>(bank.size());
  r.bytes_per_float = bytes_per_float;
  r.bank_bytes = bank_bytes(r.n_places, r.proxy_dim, bytes_per_float);
  r.plan_build_seconds = timings.plan_build_seconds;
  r.epoch_seconds = timings.epoch_seconds;
  return r;
}

}  // namespace gpm
