#include <doctest.h>

#include <cmath>

#include "gpm/errors.hpp"
#include "gpm/eval.hpp"
#include "support.hpp"

using namespace gpm;

TEST_CASE("recall by hand") {
  const Matrix refs(3, 2, {1, 0, 0, 1, -1, 0});
  const std::vector<PlaceId> ref_places{10, 20, 30};
  const Matrix queries(2, 2, {0.8, 0.6, 0.6, 0.8});
  const std::vector<PlaceId> q_places{20, 30};
  const std::vector<int> ks{1, 2, 3};
  const RecallReport r = recall_at_k(queries, q_places, refs, ref_places, ks);
  // query 0 ranks 10, 20, 30; query 1 ranks 20, 10, 30
  CHECK(r.at(1) == 0.0);
  CHECK(r.at(2) == doctest::Approx(0.5));
  CHECK(r.at(3) == doctest::Approx(1.0));
  CHECK(r.n_queries == 2);
  CHECK(r.n_references == 3);
}

TEST_CASE("recall ties go to the earlier reference") {
  const Matrix refs(2, 2, {1, 0, 1, 0});
  const Matrix q(1, 2, {1, 0});
  const std::vector<int> k1{1};
  CHECK(recall_at_k(q, std::vector<PlaceId>{1}, refs, std::vector<PlaceId>{1, 2}, k1).at(1) == 1.0);
  CHECK(recall_at_k(q, std::vector<PlaceId>{2}, refs, std::vector<PlaceId>{1, 2}, k1).at(1) == 0.0);
}

TEST_CASE("identical query and reference embeddings give recall 1") {
  const Matrix e = testing::random_unit_rows(30, 6, 1);
  std::vector<PlaceId> p(30);
  for (std::size_t i = 0; i < 30; ++i) p[i] = static_cast<PlaceId>(i);
  const RecallReport r = recall_at_k(e, p, e, p);
  for (int k : kDefaultRecallKs) CHECK(r.at(k) == 1.0);
}

TEST_CASE("random embeddings sit at chance, K/P") {
  const std::size_t places = 50, trials = 200;
  std::vector<PlaceId> ids(places);
  for (std::size_t i = 0; i < places; ++i) ids[i] = static_cast<PlaceId>(i);
  std::map<int, double> mean;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const RecallReport r = recall_at_k(testing::random_unit_rows(places, 16, 2 * t),
                                       ids, testing::random_unit_rows(places, 16, 2 * t + 1), ids);
    for (int k : kDefaultRecallKs) mean[k] += r.at(k) / trials;
  }
  for (int k : kDefaultRecallKs) {
    const double p = static_cast<double>(k) / places;
    const double se = std::sqrt(p * (1 - p) / (places * trials));
    CAPTURE(k);
    CHECK(std::abs(mean[k] - p) < 5 * se);
  }
}

TEST_CASE("recall is monotone in K") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix q = testing::random_unit_rows(40, 4, seed), r = testing::random_unit_rows(80, 4, seed + 50);
    std::vector<PlaceId> qp, rp;
    for (std::size_t i = 0; i < 40; ++i) qp.push_back(static_cast<PlaceId>(i % 20));
    for (std::size_t i = 0; i < 80; ++i) rp.push_back(static_cast<PlaceId>(i % 20));
    const std::vector<int> ks{1, 2, 3, 5, 10, 20};
    const RecallReport rep = recall_at_k(q, qp, r, rp, ks);
    for (std::size_t i = 1; i < ks.size(); ++i) CHECK(rep.at(ks[i]) >= rep.at(ks[i - 1]));
  }
}

TEST_CASE("recall argument checks") {
  const Matrix q = testing::random_unit_rows(3, 4, 1), r = testing::random_unit_rows(5, 4, 2);
  const std::vector<PlaceId> qp{0, 1, 2}, rp{0, 1, 2, 3, 4};
  CHECK_THROWS_AS(recall_at_k(q, std::vector<PlaceId>{0, 1}, r, rp), DimensionError);
  CHECK_THROWS_AS(recall_at_k(q, qp, testing::random_unit_rows(5, 3, 2), rp), DimensionError);
  const std::vector<int> bad{0};
  CHECK_THROWS(recall_at_k(q, qp, r, rp, bad));
}

TEST_CASE("bank cost arithmetic") {
  CHECK(bank_bytes(65000, 128, 4) == 33'280'000);
  CHECK(bank_bytes(65000, 32, 4) == 8'320'000);
  CHECK(bank_bytes(10, 3, 8) == 240);
  MemoryBank bank;
  bank.update(1, Vector{1, 0, 0, 0}, 0);
  bank.update(2, Vector{0, 1, 0, 0}, 0);
  const CostReport c = cost_report(bank, Timings{0.5, 2.0});
  CHECK(c.bank_bytes == 32);
  CHECK(c.n_places == 2);
  CHECK(c.proxy_dim == 4);
  CHECK(c.bank_gigabytes() == doctest::Approx(3.2e-8));
  CHECK(c.plan_build_seconds == 0.5);
}
