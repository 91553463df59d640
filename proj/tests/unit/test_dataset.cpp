#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpm/errors.hpp"
#include "gpm/dataset.hpp"
#include "gpm/eval.hpp"
#include "support.hpp"

using namespace gpm;

namespace {

GeneratorConfig tiny(std::uint64_t seed = 0) {
  GeneratorConfig g;
  g.n_places = 40;
  g.min_images = 3;
  g.max_images = 7;
  g.feature_dim = 10;
  g.n_archetypes = 4;
  g.nuisance_dims = 3;
  g.seed = seed;
  return g;
}

Vector place_center(const Place& p) {
  Vector c(p.images.cols(), 0.0);
  for (std::size_t r = 0; r < p.images.rows(); ++r)
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += p.images(r, k);
  return l2_normalize(c);
}

Matrix normalized(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const Vector v = l2_normalize(out.row(r));
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

double raw_recall_at_1(const PlaceDataset& ds) {
  const EvalSplit s = make_eval_split(ds, 0.34, 1);
  return recall_at_k(normalized(s.query_features), s.query_places, normalized(s.reference_features),
                     s.reference_places)
      .at(1);
}

}  // namespace

TEST_CASE("generator shape and bookkeeping") {
  const PlaceDataset ds = generate(tiny());
  CHECK(ds.places.size() == 40);
  CHECK(ds.feature_dim == 10);
  std::size_t images = 0;
  for (std::size_t i = 0; i < ds.places.size(); ++i) {
    const Place& p = ds.places[i];
    CHECK(p.id == static_cast<PlaceId>(i));
    CHECK(p.archetype == p.id % 4);
    CHECK(p.images.rows() >= 3);
    CHECK(p.images.rows() <= 7);
    CHECK(p.images.cols() == 10);
    images += p.images.rows();
  }
  CHECK(ds.n_images() == images);
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("generator is deterministic in its seed") {
  CHECK(generate(tiny(3)) == generate(tiny(3)));
  CHECK_FALSE(generate(tiny(3)) == generate(tiny(4)));
}

TEST_CASE("N=500 with 20 archetypes: same-archetype places are closer") {
  GeneratorConfig g;
  g.n_places = 500;
  g.n_archetypes = 20;
  for (bool coarse : {false, true}) {
    g.coarse_archetypes = coarse;
    const PlaceDataset ds = generate(g);
    std::vector<Vector> centers;
    for (const Place& p : ds.places) centers.push_back(place_center(p));
    double within = 0.0, across = 0.0;
    std::size_t n_within = 0, n_across = 0;
    for (std::size_t i = 0; i < centers.size(); ++i)
      for (std::size_t j = i + 1; j < centers.size(); ++j) {
        const double s = dot(centers[i], centers[j]);
        if (ds.places[i].archetype == ds.places[j].archetype) within += s, ++n_within;
        else across += s, ++n_across;
      }
    CAPTURE(coarse);
    CHECK(within / n_within > across / n_across + 0.3);
  }
}

TEST_CASE("raw-feature recall falls as within-place noise grows") {
  GeneratorConfig g = tiny();
  g.n_places = 200;
  g.min_images = g.max_images = 6;
  g.archetype_spread = 0.3;
  g.nuisance_gain = 0.0;
  double last = 2.0;
  for (double noise : {0.02, 0.08, 0.15, 0.25}) {
    g.within_place_noise = noise;
    const double r = raw_recall_at_1(generate(g));
    CAPTURE(noise);
    CHECK(r <= last);
    last = r;
  }
  CHECK(last < 0.9);
}

TEST_CASE("generator config validation") {
  GeneratorConfig g = tiny();
  g.within_place_noise = 0.2;
  g.archetype_spread = 0.1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny();
  g.min_images = 1;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny();
  g.max_images = 2;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = tiny();
  g.nuisance_dims = 11;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("dataset validation") {
  PlaceDataset ds = generate(tiny());
  ds.places[3].id = ds.places[2].id;
  CHECK_THROWS_AS(ds.validate(), ValidationError);
  std::stringstream ss;
  save(ds, ss);
  CHECK_THROWS_AS(load(ss), ValidationError);

  ds = generate(tiny());
  ds.places[0].images(0, 0) = std::nan("");
  CHECK_THROWS_AS(ds.validate(), ValidationError);
  ds = generate(tiny());
  ds.places[1].images = Matrix(1, 10);
  CHECK_THROWS_AS(ds.validate(), ValidationError);
}

TEST_CASE("binary round-trip") {
  GeneratorConfig g = tiny(5);
  g.coarse_archetypes = true;
  const PlaceDataset ds = generate(g);
  const auto path = std::filesystem::temp_directory_path() / "gpm_test_dataset.bin";
  save(ds, path.string());
  const PlaceDataset back = load(path.string());
  CHECK(back == ds);
  CHECK(back.meta.coarse_archetypes);

  SUBCASE("truncated file") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
    CHECK_THROWS_AS(load(path.string()), ParseError);
  }
  SUBCASE("trailing bytes") {
    std::ofstream(path, std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS_AS(load(path.string()), ParseError);
  }
  SUBCASE("not a dataset") {
    std::ofstream(path, std::ios::binary) << "hello";
    CHECK_THROWS_AS(load(path.string()), ParseError);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load(path.string()), Error);
}

TEST_CASE("csv export") {
  const PlaceDataset ds = generate(tiny());
  std::stringstream ss;
  export_csv(ds, ss);
  std::string line;
  std::getline(ss, line);
  CHECK(line.rfind("place_id,label,archetype,f0,", 0) == 0);
  CHECK(line.substr(line.rfind(',') + 1) == "f9");
  std::size_t rows = 0;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == ds.n_images());
}

TEST_CASE("holdout split arithmetic") {
  GeneratorConfig g = tiny();
  g.min_images = g.max_images = 4;
  const PlaceDataset ds = generate(g);
  const HoldoutSplit s = make_holdout_split(ds, 0.25, 7);
  CHECK(s.eval.query_places.size() == 40);
  CHECK(s.eval.reference_places.size() == 120);
  CHECK(s.skipped.empty());
  for (const Place& p : s.train.places) CHECK(p.images.rows() == 3);
  CHECK(s.eval.reference_features.rows() == 120);

  SUBCASE("queries and references partition each place's images") {
    for (std::size_t i = 0; i < ds.places.size(); ++i) {
      const Matrix& all = ds.places[i].images;
      const auto q = s.eval.query_features.row(i);
      bool found_in_refs = false;
      std::size_t found_in_all = 0;
      for (std::size_t r = 0; r < 3; ++r) {
        const auto ref = s.eval.reference_features.row(i * 3 + r);
        found_in_refs = found_in_refs || std::equal(q.begin(), q.end(), ref.begin());
      }
      for (std::size_t r = 0; r < all.rows(); ++r)
        found_in_all += std::equal(q.begin(), q.end(), all.row(r).begin());
      CHECK_FALSE(found_in_refs);
      CHECK(found_in_all == 1);
    }
  }
  SUBCASE("places that cannot keep two references are skipped") {
    GeneratorConfig h = tiny();
    h.min_images = h.max_images = 2;
    const HoldoutSplit t = make_holdout_split(generate(h), 0.5, 0);
    CHECK(t.skipped.size() == 40);
    CHECK(t.eval.query_places.empty());
    CHECK(t.eval.reference_places.size() == 80);
  }
  CHECK(make_holdout_split(ds, 0.25, 7).eval.query_features == s.eval.query_features);
  CHECK_THROWS_AS(make_holdout_split(ds, 1.0, 0), ConfigError);
}
