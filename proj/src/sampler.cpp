#include "gpm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

constexpr double kUnitNormTolerance = 1e-9;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  return out;
}

}  // namespace

std::string_view to_string(SamplingMode mode) {
  return mode == SamplingMode::gpm ? "gpm" : "random";
}

SamplingMode parse_sampling_mode(std::string_view name) {
  if (name == "gpm") return SamplingMode::gpm;
  if (name == "random") return SamplingMode::random;
  throw ConfigError("unknown sampler mode '" + std::string(name) + "' (expected random|gpm)");
}

void SamplerConfig::validate() const {
  if (places_per_batch < 2) throw ConfigError("sampler.M must be >= 2 (a batch needs negatives)");
  if (images_per_place < 2) throw ConfigError("sampler.K must be >= 2 (a place needs positives)");
}

Vector compute_place_proxy(const Matrix& z_rows) {
  if (z_rows.rows() == 0) throw PreconditionError("compute_place_proxy: no rows");
  Vector mean(z_rows.cols(), 0.0);
  for (std::size_t r = 0; r < z_rows.rows(); ++r) {
    auto row = z_rows.row(r);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(z_rows.rows());
  if (!(norm(mean) >= kDegenerateNorm)) {
    throw DegenerateInputError("compute_place_proxy: mean proxy has zero norm");
  }
  return l2_normalize(mean);
}

void MemoryBank::update(PlaceId place, std::span<const double> proxy, int epoch) {
  if (std::abs(norm(proxy) - 1.0) > kUnitNormTolerance) {
    throw PreconditionError("MemoryBank::update: proxy is not unit-norm");
  }
  if (!entries_.empty() && proxy.size() != dim_) {
    throw DimensionError("MemoryBank::update: proxy dimension changed");
  }
  dim_ = proxy.size();
  Entry& e = entries_[place];
  e.proxy.assign(proxy.begin(), proxy.end());
  e.last_update_epoch = epoch;
}

const MemoryBank::Entry& MemoryBank::at(PlaceId place) const {
  auto it = entries_.find(place);
  if (it == entries_.end()) throw PreconditionError("MemoryBank: no proxy for place " + std::to_string(place));
  return it->second;
}

std::uint64_t MemoryBank::bytes(std::uint64_t bytes_per_float) const {
  return static_cast<std::uint64_t>(entries_.size()) * dim_ * bytes_per_float;
}

void MemoryBank::save_csv(std::ostream& os) const {
  os << "place_id,epoch";
  for (std::size_t k = 0; k < dim_; ++k) os << ",p" << k;
  os << '\n' << std::setprecision(17);
  for (const auto& [id, e] : entries_) {
    os << id << ',' << e.last_update_epoch;
    for (double v : e.proxy) os << ',' << v;
    os << '\n';
  }
}

MemoryBank MemoryBank::load_csv(std::istream& is) {
  MemoryBank bank;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("bank csv: missing header");
  const std::size_t dim = split(line, ',').size() - 2;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != dim + 2) {
      throw ParseError("bank csv: wrong field count on line " + std::to_string(line_no));
    }
    try {
      Vector proxy;
      for (std::size_t k = 0; k < dim; ++k) proxy.push_back(std::stod(fields[k + 2]));
      // Bypass update() so values round-trip even if not exactly unit-norm.
      if (bank.entries_.count(std::stoll(fields[0])) != 0) {
        throw ParseError("bank csv: duplicate place_id on line " + std::to_string(line_no));
      }
      bank.entries_[std::stoll(fields[0])] = Entry{std::move(proxy), std::stoi(fields[1])};
    } catch (const std::logic_error&) {
      throw ParseError("bank csv: malformed number on line " + std::to_string(line_no));
    }
  }
  bank.dim_ = dim;
  return bank;
}

std::size_t BatchPlan::n_places() const {
  std::size_t n = 0;
  for (const auto& t : tuples) n += t.size();
  return n;
}

bool BatchPlan::is_partition_of(std::span<const PlaceId> places) const {
  std::vector<PlaceId> covered;
  for (const auto& t : tuples) covered.insert(covered.end(), t.begin(), t.end());
  std::vector<PlaceId> expected(places.begin(), places.end());
  std::sort(covered.begin(), covered.end());
  std::sort(expected.begin(), expected.end());
  return covered == expected;
}

void BatchPlan::save(std::ostream& os) const {
  for (const auto& t : tuples) {
    for (std::size_t i = 0; i < t.size(); ++i) os << (i ? " " : "") << t[i];
    os << '\n';
  }
}

BatchPlan BatchPlan::load(std::istream& is) {
  BatchPlan plan;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<PlaceId> tuple;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        tuple.push_back(std::stoll(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ParseError("plan: malformed id '" + tok + "' on line " + std::to_string(line_no));
      }
    }
    plan.tuples.push_back(std::move(tuple));
  }
  return plan;
}

std::vector<PlaceId> knn_search(std::span<const ProxyRef> references, std::span<const double> query,
                                std::size_t k) {
  if (k > references.size()) {
    throw PreconditionError("knn_search: k=" + std::to_string(k) + " exceeds " +
                            std::to_string(references.size()) + " references");
  }
  std::vector<std::pair<double, PlaceId>> scored;
  scored.reserve(references.size());
  for (const ProxyRef& r : references) scored.emplace_back(dot(r.proxy, query), r.id);
  auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  std::vector<PlaceId> ids;
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back(scored[i].second);
  return ids;
}

BatchPlan build_batch_plan(const MemoryBank& bank, std::size_t places_per_batch, std::uint64_t seed) {
  if (bank.empty()) throw PreconditionError("build_batch_plan: empty memory bank");
  if (places_per_batch < 1) throw PreconditionError("build_batch_plan: M must be >= 1");
  std::vector<ProxyRef> remaining;
  remaining.reserve(bank.size());
  for (const auto& [id, e] : bank.entries()) remaining.push_back({id, e.proxy});

  std::mt19937_64 rng(seed);
  BatchPlan plan;
  plan.mode = SamplingMode::gpm;
  while (!remaining.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
    const std::size_t qi = pick(rng);
    const ProxyRef query = remaining[qi];

    // The query is its own nearest neighbour; search the others for the rest.
    std::vector<ProxyRef> others;
    others.reserve(remaining.size() - 1);
    for (std::size_t i = 0; i < remaining.size(); ++i)
      if (i != qi) others.push_back(remaining[i]);
    const std::size_t k = std::min(places_per_batch - 1, others.size());

    std::vector<PlaceId> tuple{query.id};
    const auto neighbours = knn_search(others, query.proxy, k);
    tuple.insert(tuple.end(), neighbours.begin(), neighbours.end());

    const std::set<PlaceId> taken(tuple.begin(), tuple.end());
    std::erase_if(remaining, [&](const ProxyRef& r) { return taken.count(r.id) != 0; });
    plan.tuples.push_back(std::move(tuple));
  }
  return plan;
}

BatchPlan random_plan(std::span<const PlaceId> places, std::size_t places_per_batch, std::uint64_t seed) {
  if (places.empty()) throw PreconditionError("random_plan: no places");
  if (places_per_batch < 1) throw PreconditionError("random_plan: M must be >= 1");
  std::vector<PlaceId> order(places.begin(), places.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  BatchPlan plan;
  plan.mode = SamplingMode::random;
  for (std::size_t i = 0; i < order.size(); i += places_per_batch) {
    const std::size_t end = std::min(order.size(), i + places_per_batch);
    plan.tuples.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 finalizer over (seed, epoch)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(epoch) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

BatchPlan epoch_boundary(const MemoryBank& bank, std::span<const PlaceId> places, int epoch,
                         const SamplerConfig& cfg) {
  const auto m = static_cast<std::size_t>(cfg.places_per_batch);
  const std::uint64_t seed = epoch_seed(cfg.seed, epoch);
  bool covered = epoch > 0 && cfg.mode == SamplingMode::gpm;
  for (std::size_t i = 0; covered && i < places.size(); ++i) covered = bank.contains(places[i]);

  BatchPlan plan;
  if (covered && bank.size() == places.size()) {
    plan = build_batch_plan(bank, m, seed);
  } else if (covered) {
    MemoryBank subset;
    for (PlaceId id : places) {
      const auto& e = bank.at(id);
      subset.update(id, e.proxy, e.last_update_epoch);
    }
    plan = build_batch_plan(subset, m, seed);
  } else {
    plan = random_plan(places, m, seed);
  }
  plan.epoch = epoch;
  return plan;
}

BatchSampler::BatchSampler(BatchPlan plan, std::uint64_t seed) : plan_(std::move(plan)), rng_(seed) {}

std::optional<std::vector<BatchSlot>> BatchSampler::next_batch(const PlaceDataset& ds,
                                                               std::size_t images_per_place) {
  if (cursor_ >= plan_.tuples.size()) return std::nullopt;
  const auto& tuple = plan_.tuples[cursor_++];
  std::vector<BatchSlot> slots;
  slots.reserve(tuple.size());
  for (PlaceId id : tuple) {
    const std::size_t n = ds.places[ds.index_of(id)].images.rows();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng_);
    if (n >= images_per_place) {
      idx.resize(images_per_place);
    } else {
      std::uniform_int_distribution<std::size_t> any(0, n - 1);
      while (idx.size() < images_per_place) idx.push_back(any(rng_));
    }
    slots.push_back({id, std::move(idx)});
  }
  return slots;
}

AssembledBatch assemble_batch(const PlaceDataset& ds, std::span<const BatchSlot> slots) {
  std::size_t rows = 0;
  for (const BatchSlot& s : slots) rows += s.images.size();
  AssembledBatch batch;
  batch.features = Matrix(rows, static_cast<std::size_t>(ds.feature_dim));
  std::size_t r = 0;
  for (const BatchSlot& s : slots) {
    const Place& place = ds.places[ds.index_of(s.place)];
    batch.places.push_back(s.place);
    for (std::size_t img : s.images) {
      const auto src = place.images.row(img);
      std::copy(src.begin(), src.end(), batch.features.row(r++).begin());
      batch.labels.push_back(s.place);
    }
  }
  return batch;
}

}  // namespace gpm
