#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpm/errors.hpp"
#include "gpm/losses.hpp"
#include "support.hpp"

using namespace gpm;

namespace {

using Labels = std::vector<std::int64_t>;

LossConfig config(LossKind kind, bool ohm) {
  LossConfig c;
  c.kind = kind;
  c.ohm_enabled = ohm;
  return c;
}

// Brute-force references written straight from the loss definitions.

double triplet_all(const Matrix& s, const Labels& l, double m) {
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t a = 0; a < l.size(); ++a)
    for (std::size_t p = 0; p < l.size(); ++p)
      for (std::size_t n = 0; n < l.size(); ++n) {
        if (p == a || l[p] != l[a] || l[n] == l[a]) continue;
        sum += std::max(0.0, m - s(a, p) + s(a, n));
        count += 1.0;
      }
  return sum / count;
}

double triplet_batch_hard(const Matrix& s, const Labels& l, double m) {
  double sum = 0.0;
  double anchors = 0.0;
  for (std::size_t a = 0; a < l.size(); ++a) {
    double worst = -1.0;
    for (std::size_t p = 0; p < l.size(); ++p)
      for (std::size_t n = 0; n < l.size(); ++n)
        if (p != a && l[p] == l[a] && l[n] != l[a]) worst = std::max(worst, m - s(a, p) + s(a, n));
    if (worst == -1.0) continue;
    sum += std::max(0.0, worst);
    anchors += 1.0;
  }
  return sum / anchors;
}

double contrastive_ref(const Matrix& s, const Labels& l, const LossConfig& c) {
  double sum = 0.0;
  double anchors = 0.0;
  for (std::size_t a = 0; a < l.size(); ++a) {
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < l.size(); ++j) {
      if (j == a) continue;
      (l[j] == l[a] ? pos : neg).push_back(s(a, j));
    }
    if (pos.empty()) continue;
    anchors += 1.0;
    auto pos_term = [&](double v) { return std::pow(std::max(0.0, 1.0 - c.contrastive_pos_margin - v), 2); };
    auto neg_term = [&](double v) { return std::pow(std::max(0.0, v - c.contrastive_neg_margin), 2); };
    if (c.ohm_enabled) {
      sum += pos_term(*std::min_element(pos.begin(), pos.end()));
      double ns = 0.0;
      int nk = 0;
      for (double v : neg)
        if (v > c.contrastive_neg_margin) ns += neg_term(v), ++nk;
      if (nk > 0) sum += ns / nk;
    } else {
      double ps = 0.0, ns = 0.0;
      for (double v : pos) ps += pos_term(v);
      for (double v : neg) ns += neg_term(v);
      sum += ps / pos.size() + ns / neg.size();
    }
  }
  return sum / anchors;
}

double ms_ref(const Matrix& s, const Labels& l, const LossConfig& c) {
  double sum = 0.0;
  double anchors = 0.0;
  for (std::size_t a = 0; a < l.size(); ++a) {
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < l.size(); ++j) {
      if (j == a) continue;
      (l[j] == l[a] ? pos : neg).push_back(s(a, j));
    }
    if (pos.empty() || neg.empty()) continue;
    if (c.ohm_enabled) {
      const double min_p = *std::min_element(pos.begin(), pos.end());
      const double max_n = *std::max_element(neg.begin(), neg.end());
      std::erase_if(pos, [&](double v) { return !(v < max_n + c.ms_epsilon); });
      std::erase_if(neg, [&](double v) { return !(v > min_p - c.ms_epsilon); });
      if (pos.empty() || neg.empty()) continue;
    }
    double ep = 1.0, en = 1.0;
    for (double v : pos) ep += std::exp(-c.ms_alpha * (v - c.ms_lambda));
    for (double v : neg) en += std::exp(c.ms_beta * (v - c.ms_lambda));
    sum += std::log(ep) / c.ms_alpha + std::log(en) / c.ms_beta;
    anchors += 1.0;
  }
  return anchors > 0.0 ? sum / anchors : 0.0;
}

double reference(const Matrix& s, const Labels& l, const LossConfig& c) {
  switch (c.kind) {
    case LossKind::triplet:
      return c.ohm_enabled ? triplet_batch_hard(s, l, c.triplet_margin) : triplet_all(s, l, c.triplet_margin);
    case LossKind::contrastive: return contrastive_ref(s, l, c);
    case LossKind::multi_similarity: return ms_ref(s, l, c);
  }
  return 0.0;
}

constexpr LossKind kKinds[] = {LossKind::triplet, LossKind::contrastive, LossKind::multi_similarity};

}  // namespace

TEST_CASE("pairwise similarity of unit rows") {
  const Matrix e = testing::random_unit_rows(7, 5, 1);
  const Matrix s = pairwise_similarity(e);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(s(i, i) == doctest::Approx(1.0));
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(s(i, j) == s(j, i));
      CHECK(s(i, j) == doctest::Approx(dot(e.row(i), e.row(j))));
    }
  }
}

TEST_CASE("loss values match brute-force references") {
  for (LossKind kind : kKinds) {
    for (bool ohm : {false, true}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t places = 2 + seed % 4, k = 2 + seed % 3;
        const Labels l = testing::block_labels(places, k);
        const Matrix s = pairwise_similarity(testing::random_unit_rows(l.size(), 4, 200 + seed));
        const LossConfig c = config(kind, ohm);
        CAPTURE(to_string(kind));
        CAPTURE(ohm);
        CHECK(compute_loss(s, l, c).value == doctest::Approx(reference(s, l, c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("loss gradients match finite differences through S = E Eᵀ") {
  for (LossKind kind : kKinds) {
    for (bool ohm : {false, true}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Labels l = testing::block_labels(3, 4);
        ParamTensor e(testing::random_unit_rows(l.size(), 8, 300 + seed));
        const LossConfig c = config(kind, ohm);
        const LossOutput out = compute_loss(pairwise_similarity(e.value), l, c);
        e.grad = similarity_grad_to_embeddings(out.grad_sim, e.value);
        const double err =
            finite_diff_check([&] { return compute_loss(pairwise_similarity(e.value), l, c).value; }, e, 1e-6);
        CAPTURE(to_string(kind));
        CAPTURE(ohm);
        CHECK(err < 1e-4);
      }
    }
  }
}

TEST_CASE("triplet statistics count every valid triplet") {
  const Labels l = {0, 0, 0, 1, 1, 2};
  const Matrix s = pairwise_similarity(testing::random_unit_rows(6, 3, 4));
  const LossOutput out = triplet_loss(s, l, config(LossKind::triplet, true));
  // anchors of place 0: 2 positives x 3 negatives; place 1: 1 x 4; place 2 has none
  CHECK(out.stats.candidates == 3 * 6 + 2 * 4);
  std::int64_t violating = 0;
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t p = 0; p < 6; ++p)
      for (std::size_t n = 0; n < 6; ++n)
        if (p != a && l[p] == l[a] && l[n] != l[a] && 0.1 - s(a, p) + s(a, n) > 0) ++violating;
  CHECK(out.stats.informative == violating);
}

TEST_CASE("well separated batch gives zero triplet loss and zero gradient") {
  Matrix e(4, 2, {1, 0, 1, 0, 0, 1, 0, 1});
  const LossOutput out = triplet_loss(pairwise_similarity(e), Labels{0, 0, 1, 1}, config(LossKind::triplet, false));
  CHECK(out.value == 0.0);
  CHECK(out.grad_sim == Matrix(4, 4));
  CHECK(out.stats.informative == 0);
}

TEST_CASE("multi-similarity: positive at lambda, negatives far gives (1/alpha) log 2") {
  const LossConfig c = config(LossKind::multi_similarity, false);
  Matrix s(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) s(i, j) = i == j ? 1.0 : (i / 2 == j / 2 ? c.ms_lambda : -1.0);
  CHECK(multi_similarity_loss(s, Labels{0, 0, 1, 1}, c).value == doctest::Approx(std::log(2.0) / c.ms_alpha).epsilon(1e-12));
}

TEST_CASE("multi-similarity with OHM skips anchors without mined pairs") {
  LossConfig c = config(LossKind::multi_similarity, true);
  Matrix e(4, 2, {1, 0, 1, 0, -1, 0, -1, 0});
  const LossOutput out = multi_similarity_loss(pairwise_similarity(e), Labels{0, 0, 1, 1}, c);
  CHECK(out.value == 0.0);
  CHECK(out.stats.informative == 0);
  CHECK(out.stats.candidates == 12);
}

TEST_CASE("OHM never keeps more pairs than the full loss") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Labels l = testing::block_labels(4, 3);
    const Matrix s = pairwise_similarity(testing::random_unit_rows(12, 3, 400 + seed));
    const LossOutput full = multi_similarity_loss(s, l, config(LossKind::multi_similarity, false));
    std::size_t touched_full = 0, touched_ohm = 0;
    const LossOutput ohm = multi_similarity_loss(s, l, config(LossKind::multi_similarity, true));
    for (std::size_t i = 0; i < full.grad_sim.size(); ++i) {
      touched_full += full.grad_sim.data()[i] != 0.0;
      touched_ohm += ohm.grad_sim.data()[i] != 0.0;
    }
    CHECK(touched_ohm <= touched_full);
  }
}

TEST_CASE("batch preconditions") {
  const Matrix s = pairwise_similarity(testing::random_unit_rows(4, 3, 5));
  for (LossKind kind : kKinds) {
    const LossConfig c = config(kind, true);
    CHECK_THROWS_AS(compute_loss(s, Labels{7, 7, 7, 7}, c), PreconditionError);
    CHECK_THROWS_AS(compute_loss(s, Labels{0, 1, 2, 3}, c), PreconditionError);
    CHECK_THROWS_AS(compute_loss(s, Labels{0, 0, 1}, c), DimensionError);
  }
}

TEST_CASE("batch informativeness") {
  const Labels l = testing::block_labels(3, 3);
  const Matrix s = pairwise_similarity(testing::random_unit_rows(9, 3, 6));
  for (LossKind kind : kKinds) {
    const BatchInformativeness info = batch_informativeness(s, l, config(kind, true));
    CHECK(info.triplets.candidates == 9 * 2 * 6);
    CHECK(info.pairs.candidates == 9 * 8);
    CHECK(info.triplets.informative == triplet_loss(s, l, config(LossKind::triplet, true)).stats.informative);
    if (kind != LossKind::triplet)
      CHECK(info.pairs.informative == compute_loss(s, l, config(kind, true)).stats.informative);
  }
}

TEST_CASE("informative fraction accumulator") {
  InformativeFraction f(2);
  CHECK_THROWS_AS(f.value(), PreconditionError);
  f.add({10, 5});
  f.add({0, 0});
  CHECK(f.count() == 1);
  f.add({4, 4});
  CHECK(f.value() == doctest::Approx(0.75));
  f.add({4, 0});
  CHECK(f.value() == doctest::Approx(0.5));
  const MiningStats batches[] = {{2, 1}, {4, 4}};
  CHECK(informative_fraction(batches) == doctest::Approx(0.75));
}

TEST_CASE("loss config parsing and validation") {
  CHECK(parse_loss_kind("ms") == LossKind::multi_similarity);
  for (LossKind k : kKinds) CHECK(parse_loss_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_loss_kind("arcface"), ConfigError);
  LossConfig c;
  c.ms_lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
