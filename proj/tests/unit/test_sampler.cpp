#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "gpm/errors.hpp"
#include "gpm/sampler.hpp"
#include "support.hpp"

using namespace gpm;

namespace {

MemoryBank random_bank(std::size_t n, std::size_t dim, std::uint64_t seed) {
  const Matrix p = testing::random_unit_rows(n, dim, seed);
  MemoryBank bank;
  for (std::size_t i = 0; i < n; ++i) bank.update(static_cast<PlaceId>(i) * 3 + 1, p.row(i), 0);
  return bank;
}

std::vector<PlaceId> full_sort_knn(const MemoryBank& bank, std::span<const double> q, std::size_t k) {
  std::vector<std::pair<double, PlaceId>> scored;
  for (const auto& [id, e] : bank.entries()) scored.emplace_back(-dot(e.proxy, q), id);
  std::sort(scored.begin(), scored.end());
  std::vector<PlaceId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<ProxyRef> refs_of(const MemoryBank& bank) {
  std::vector<ProxyRef> refs;
  for (const auto& [id, e] : bank.entries()) refs.push_back({id, e.proxy});
  return refs;
}

PlaceDataset small_dataset(std::int64_t places, std::int64_t min_imgs, std::int64_t max_imgs) {
  GeneratorConfig g;
  g.n_places = places;
  g.min_images = min_imgs;
  g.max_images = max_imgs;
  g.feature_dim = 8;
  g.n_archetypes = 3;
  g.nuisance_dims = 2;
  return generate(g);
}

}  // namespace

TEST_CASE("place proxy") {
  const Matrix z(2, 2, {1, 0, 0, 1});
  const Vector p = compute_place_proxy(z);
  CHECK(p[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(p[1] == doctest::Approx(std::sqrt(0.5)));
  const Matrix same(3, 2, {0.6, 0.8, 0.6, 0.8, 0.6, 0.8});
  CHECK(compute_place_proxy(same)[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(compute_place_proxy(Matrix(2, 2, {1, 0, -1, 0})), DegenerateInputError);
}

TEST_CASE("memory bank") {
  MemoryBank bank;
  const Vector a{1, 0, 0}, b{0, 0, 1};
  bank.update(5, a, 0);
  bank.update(5, b, 2);
  CHECK(bank.size() == 1);
  CHECK(bank.at(5).proxy == b);
  CHECK(bank.at(5).last_update_epoch == 2);
  CHECK_THROWS_AS(bank.update(6, Vector{1, 1, 0}, 0), PreconditionError);
  CHECK_THROWS_AS(bank.update(6, Vector{1, 0}, 0), DimensionError);
  CHECK_THROWS(bank.at(99));
  CHECK(bank.bytes(4) == 12);

  const MemoryBank big = random_bank(40, 6, 1);
  std::stringstream ss;
  big.save_csv(ss);
  CHECK(MemoryBank::load_csv(ss) == big);
}

TEST_CASE("knn search equals the full-sort oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 5 + seed * 17 % 200;
    const MemoryBank bank = random_bank(n, 2 + seed % 7, seed);
    const auto refs = refs_of(bank);
    const Matrix qm = testing::random_unit_rows(1, bank.proxy_dim(), 1000 + seed);
    const Vector q(qm.row(0).begin(), qm.row(0).end());
    const std::size_t k = 1 + seed % n;
    CHECK(knn_search(refs, q, k) == full_sort_knn(bank, q, k));
  }
}

TEST_CASE("knn ties go to the smaller id; k beyond the bank is an error") {
  MemoryBank bank;
  bank.update(9, Vector{1, 0}, 0);
  bank.update(2, Vector{1, 0}, 0);
  bank.update(4, Vector{0, 1}, 0);
  const auto refs = refs_of(bank);
  CHECK(knn_search(refs, Vector{1, 0}, 2) == std::vector<PlaceId>{2, 9});
  CHECK_THROWS_AS(knn_search(refs, Vector{1, 0}, 4), PreconditionError);
}

TEST_CASE("batch plan: 10 places, M = 4 gives tuples of 4, 4, 2") {
  const MemoryBank bank = random_bank(10, 4, 2);
  const BatchPlan plan = build_batch_plan(bank, 4, 0);
  REQUIRE(plan.tuples.size() == 3);
  CHECK(plan.tuples[0].size() == 4);
  CHECK(plan.tuples[1].size() == 4);
  CHECK(plan.tuples[2].size() == 2);
  std::vector<PlaceId> ids;
  for (const auto& [id, e] : bank.entries()) ids.push_back(id);
  CHECK(plan.is_partition_of(ids));
  CHECK(plan.mode == SamplingMode::gpm);
}

TEST_CASE("batch plan recovers well separated clusters") {
  const std::size_t m = 5, clusters = 6, dim = 12;
  const Matrix centers = testing::random_unit_rows(clusters, dim, 3);
  MemoryBank bank;
  Matrix noise = testing::random_matrix(m * clusters, dim, 4, 0.01);
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      Vector v(centers.row(c).begin(), centers.row(c).end());
      for (std::size_t k = 0; k < dim; ++k) v[k] += noise(c * m + i, k);
      bank.update(static_cast<PlaceId>(c * 100 + i), l2_normalize(v), 0);
    }
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BatchPlan plan = build_batch_plan(bank, m, seed);
    REQUIRE(plan.tuples.size() == clusters);
    for (const auto& t : plan.tuples) {
      std::set<PlaceId> cluster;
      for (PlaceId id : t) cluster.insert(id / 100);
      CHECK(cluster.size() == 1);
    }
  }
}

TEST_CASE("batch plan: first member's neighbours are its nearest remaining places") {
  const MemoryBank bank = random_bank(30, 3, 5);
  const BatchPlan plan = build_batch_plan(bank, 6, 7);
  const PlaceId head = plan.tuples[0][0];
  auto want = full_sort_knn(bank, bank.at(head).proxy, 6);
  auto got = plan.tuples[0];
  std::sort(want.begin(), want.end());
  std::sort(got.begin(), got.end());
  CHECK(got == want);
}

TEST_CASE("plans are deterministic in their seed") {
  const MemoryBank bank = random_bank(50, 4, 6);
  CHECK(build_batch_plan(bank, 7, 3).tuples == build_batch_plan(bank, 7, 3).tuples);
  std::vector<PlaceId> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  CHECK(random_plan(ids, 7, 3).tuples == random_plan(ids, 7, 3).tuples);
  CHECK(random_plan(ids, 7, 3).tuples != random_plan(ids, 7, 4).tuples);
  CHECK(random_plan(ids, 7, 3).is_partition_of(ids));
  CHECK(epoch_seed(1, 2) != epoch_seed(1, 3));
}

TEST_CASE("plan partition check and text round-trip") {
  BatchPlan p;
  p.tuples = {{1, 2}, {3}};
  const std::vector<PlaceId> ids{1, 2, 3};
  CHECK(p.is_partition_of(ids));
  CHECK(p.n_places() == 3);
  p.tuples = {{1, 2}, {2, 3}};
  CHECK_FALSE(p.is_partition_of(ids));
  p.tuples = {{1, 2}};
  CHECK_FALSE(p.is_partition_of(ids));
  p.tuples = {{10, 20, 30}, {40}};
  std::stringstream ss;
  p.save(ss);
  CHECK(BatchPlan::load(ss).tuples == p.tuples);
}

TEST_CASE("epoch boundary picks the plan kind") {
  std::vector<PlaceId> ids;
  MemoryBank bank;
  const Matrix p = testing::random_unit_rows(12, 3, 8);
  for (std::size_t i = 0; i < 12; ++i) ids.push_back(static_cast<PlaceId>(i));
  for (std::size_t i = 0; i < 11; ++i) bank.update(ids[i], p.row(i), 0);
  SamplerConfig cfg;
  cfg.places_per_batch = 4;

  CHECK(epoch_boundary(bank, ids, 0, cfg).mode == SamplingMode::random);
  CHECK(epoch_boundary(bank, ids, 1, cfg).mode == SamplingMode::random);  // bank incomplete
  bank.update(ids[11], p.row(11), 0);
  const BatchPlan plan = epoch_boundary(bank, ids, 1, cfg);
  CHECK(plan.mode == SamplingMode::gpm);
  CHECK(plan.epoch == 1);
  CHECK(plan.is_partition_of(ids));
  CHECK(epoch_boundary(bank, ids, 0, cfg).mode == SamplingMode::random);
  cfg.mode = SamplingMode::random;
  CHECK(epoch_boundary(bank, ids, 3, cfg).mode == SamplingMode::random);
}

TEST_CASE("batch sampler walks the plan and draws images") {
  const PlaceDataset ds = small_dataset(10, 3, 6);
  const auto ids = ds.place_ids();
  BatchSampler sampler(random_plan(ids, 4, 1), 2);
  std::size_t batches = 0, places = 0;
  while (auto batch = sampler.next_batch(ds, 4)) {
    ++batches;
    for (const BatchSlot& slot : *batch) {
      ++places;
      const std::size_t have = ds.places[ds.index_of(slot.place)].images.rows();
      CHECK(slot.images.size() == 4);
      std::set<std::size_t> distinct(slot.images.begin(), slot.images.end());
      CHECK(distinct.size() == std::min<std::size_t>(4, have));
      for (std::size_t i : slot.images) CHECK(i < have);
    }
  }
  CHECK(batches == 3);
  CHECK(places == 10);
  CHECK(sampler.remaining() == 0);
  CHECK_FALSE(sampler.next_batch(ds, 4).has_value());
}

TEST_CASE("assembled batch: M = 60, K = 4 gives 240 labelled rows") {
  const PlaceDataset ds = small_dataset(60, 6, 6);
  BatchSampler sampler(random_plan(ds.place_ids(), 60, 3), 4);
  const auto slots = sampler.next_batch(ds, 4);
  REQUIRE(slots.has_value());
  const AssembledBatch b = assemble_batch(ds, *slots);
  CHECK(b.features.rows() == 240);
  CHECK(b.features.cols() == 8);
  CHECK(b.labels.size() == 240);
  CHECK(b.places.size() == 60);
  for (std::size_t r = 0; r < 240; ++r) {
    const BatchSlot& slot = (*slots)[r / 4];
    const Place& place = ds.places[ds.index_of(slot.place)];
    CHECK(b.labels[r] == place.label);
    const auto want = place.images.row(slot.images[r % 4]);
    CHECK(std::equal(want.begin(), want.end(), b.features.row(r).begin()));
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  c.places_per_batch = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.images_per_place = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_sampling_mode("gpm") == SamplingMode::gpm);
  CHECK_THROWS_AS(parse_sampling_mode("uniform"), ConfigError);
}
