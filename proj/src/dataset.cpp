#include "gpm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_set>

#include "binary_io.hpp"
#include "gpm/errors.hpp"

namespace gpm {

namespace {

constexpr char kDatasetMagic[8] = {'G', 'P', 'M', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kDatasetVersion = 2;

Vector gaussian_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector v(dim);
  for (double& x : v) x = n01(rng);
  return v;
}

Vector random_unit_vector(std::size_t dim, std::mt19937_64& rng) {
  for (;;) {
    Vector v = gaussian_vector(dim, rng);
    if (norm(v) > 1e-6) return l2_normalize(v);
  }
}

/// Orthonormal basis of `count` random directions (Gram–Schmidt).
std::vector<Vector> random_orthonormal(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::vector<Vector> basis;
  while (basis.size() < count) {
    Vector v = gaussian_vector(dim, rng);
    for (const Vector& u : basis) {
      const double c = dot(v, u);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= c * u[i];
    }
    if (norm(v) > 1e-6) basis.push_back(l2_normalize(v));
  }
  return basis;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_places < 1) throw ConfigError("data.n_places must be >= 1");
  if (min_images < 2) throw ConfigError("data.min_images must be >= 2");
  if (max_images < min_images) throw ConfigError("data.max_images must be >= data.min_images");
  if (feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
  if (n_archetypes < 1 || n_archetypes > n_places) {
    throw ConfigError("data.n_archetypes must be in [1, n_places]");
  }
  if (!(within_place_noise >= 0.0)) throw ConfigError("data.within_place_noise must be >= 0");
  if (!(within_place_noise < archetype_spread)) {
    throw ConfigError("data.within_place_noise must be smaller than data.archetype_spread");
  }
  if (nuisance_dims < 0 || nuisance_dims > feature_dim) {
    throw ConfigError("data.nuisance_dims must be in [0, feature_dim]");
  }
  if (!(nuisance_gain >= 0.0)) throw ConfigError("data.nuisance_gain must be >= 0");
}

std::size_t PlaceDataset::n_images() const {
  std::size_t n = 0;
  for (const Place& p : places) n += p.images.rows();
  return n;
}

std::vector<PlaceId> PlaceDataset::place_ids() const {
  std::vector<PlaceId> ids;
  ids.reserve(places.size());
  for (const Place& p : places) ids.push_back(p.id);
  return ids;
}

std::size_t PlaceDataset::index_of(PlaceId id) const {
  // Generated datasets use id == index; fall back to a scan otherwise.
  if (id >= 0 && static_cast<std::size_t>(id) < places.size() &&
      places[static_cast<std::size_t>(id)].id == id) {
    return static_cast<std::size_t>(id);
  }
  for (std::size_t i = 0; i < places.size(); ++i)
    if (places[i].id == id) return i;
  throw PreconditionError("unknown place id " + std::to_string(id));
}

void PlaceDataset::validate() const {
  if (feature_dim < 1) throw ValidationError("dataset: feature_dim must be >= 1");
  std::unordered_set<PlaceId> seen;
  for (const Place& p : places) {
    if (!seen.insert(p.id).second) {
      throw ValidationError("dataset: duplicate place_id " + std::to_string(p.id));
    }
    if (p.images.rows() < 2) {
      throw ValidationError("dataset: place " + std::to_string(p.id) + " has fewer than 2 images");
    }
    if (p.images.cols() != static_cast<std::size_t>(feature_dim)) {
      throw ValidationError("dataset: place " + std::to_string(p.id) + " has wrong feature dimension");
    }
    if (!p.images.all_finite()) {
      throw ValidationError("dataset: place " + std::to_string(p.id) + " has non-finite features");
    }
  }
}

PlaceDataset generate(const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto dim = static_cast<std::size_t>(cfg.feature_dim);

  std::vector<Vector> archetypes;
  for (std::int64_t g = 0; g < cfg.n_archetypes; ++g) archetypes.push_back(random_unit_vector(dim, rng));
  const auto nuisance = random_orthonormal(static_cast<std::size_t>(cfg.nuisance_dims), dim, rng);
  if (cfg.coarse_archetypes) {
    for (Vector& a : archetypes) {
      const Vector c = random_unit_vector(nuisance.size(), rng);
      std::fill(a.begin(), a.end(), 0.0);
      for (std::size_t j = 0; j < nuisance.size(); ++j)
        for (std::size_t k = 0; k < dim; ++k) a[k] += c[j] * nuisance[j][k];
    }
  }

  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> n_images(cfg.min_images, cfg.max_images);
  const double nuisance_std = cfg.within_place_noise * cfg.nuisance_gain;

  PlaceDataset ds;
  ds.meta = cfg;
  ds.feature_dim = cfg.feature_dim;
  ds.places.reserve(static_cast<std::size_t>(cfg.n_places));
  for (std::int64_t p = 0; p < cfg.n_places; ++p) {
    Place place;
    place.id = p;
    place.label = p;
    place.archetype = p % cfg.n_archetypes;
    Vector center = archetypes[static_cast<std::size_t>(place.archetype)];
    for (double& c : center) c += cfg.archetype_spread * n01(rng);

    const auto count = static_cast<std::size_t>(n_images(rng));
    place.images = Matrix(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
      auto row = place.images.row(i);
      for (std::size_t k = 0; k < dim; ++k) row[k] = center[k] + cfg.within_place_noise * n01(rng);
      for (const Vector& u : nuisance) {
        const double g = nuisance_std * n01(rng);
        for (std::size_t k = 0; k < dim; ++k) row[k] += g * u[k];
      }
    }
    ds.places.push_back(std::move(place));
  }
  return ds;
}

void save(const PlaceDataset& ds, std::ostream& os) {
  detail::BinaryWriter w(os);
  w.put_bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.put(kDatasetVersion);
  const GeneratorConfig& m = ds.meta;
  w.put(m.n_places);
  w.put(m.min_images);
  w.put(m.max_images);
  w.put(m.feature_dim);
  w.put(m.n_archetypes);
  w.put(m.within_place_noise);
  w.put(m.archetype_spread);
  w.put(m.nuisance_dims);
  w.put(m.nuisance_gain);
  w.put<std::uint8_t>(m.coarse_archetypes ? 1 : 0);
  w.put(m.seed);
  w.put(ds.feature_dim);
  w.put<std::uint64_t>(ds.places.size());
  for (const Place& p : ds.places) {
    w.put(p.id);
    w.put(p.label);
    w.put(p.archetype);
    w.put_matrix(p.images);
  }
}

void save(const PlaceDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open dataset for writing: " + path);
  save(ds, os);
  if (!os) throw Error("failed writing dataset: " + path);
}

PlaceDataset load(std::istream& is, const std::string& source) {
  detail::BinaryReader r(is, source);
  char magic[8];
  r.get_bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) r.fail("not a dataset file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion) r.fail("unsupported dataset version " + std::to_string(version));

  PlaceDataset ds;
  GeneratorConfig& m = ds.meta;
  m.n_places = r.get<std::int64_t>("n_places");
  m.min_images = r.get<std::int64_t>("min_images");
  m.max_images = r.get<std::int64_t>("max_images");
  m.feature_dim = r.get<std::int64_t>("feature_dim");
  m.n_archetypes = r.get<std::int64_t>("n_archetypes");
  m.within_place_noise = r.get<double>("within_place_noise");
  m.archetype_spread = r.get<double>("archetype_spread");
  m.nuisance_dims = r.get<std::int64_t>("nuisance_dims");
  m.nuisance_gain = r.get<double>("nuisance_gain");
  m.coarse_archetypes = r.get<std::uint8_t>("coarse_archetypes") != 0;
  m.seed = r.get<std::uint64_t>("seed");
  ds.feature_dim = r.get<std::int64_t>("feature_dim");
  const auto count = r.get<std::uint64_t>("place count");
  if (count > (1ull << 32)) r.fail("implausible place count");
  ds.places.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Place p;
    p.id = r.get<PlaceId>("place_id");
    p.label = r.get<std::int64_t>("label");
    p.archetype = r.get<std::int64_t>("archetype");
    p.images = r.get_matrix("images");
    ds.places.push_back(std::move(p));
  }
  if (!r.at_eof()) r.fail("trailing bytes after last place");
  ds.validate();
  return ds;
}

PlaceDataset load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset: " + path);
  return load(is, path);
}

void export_csv(const PlaceDataset& ds, std::ostream& os) {
  os << "place_id,label,archetype";
  for (std::int64_t k = 0; k < ds.feature_dim; ++k) os << ",f" << k;
  os << '\n' << std::setprecision(17);
  for (const Place& p : ds.places) {
    for (std::size_t i = 0; i < p.images.rows(); ++i) {
      os << p.id << ',' << p.label << ',' << p.archetype;
      for (double v : p.images.row(i)) os << ',' << v;
      os << '\n';
    }
  }
}

HoldoutSplit make_holdout_split(const PlaceDataset& ds, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must be in [0,1)");
  }
  std::mt19937_64 rng(seed);
  HoldoutSplit out;
  out.train.meta = ds.meta;
  out.train.feature_dim = ds.feature_dim;
  std::vector<Vector> queries;
  std::vector<Vector> references;
  for (const Place& place : ds.places) {
    const std::size_t n = place.images.rows();
    auto n_query = static_cast<std::size_t>(std::floor(static_cast<double>(n) * holdout_fraction + 1e-9));
    if (n_query > 0 && n - n_query < 2) {
      out.skipped.push_back(place.id);
      n_query = 0;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_query));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_query), order.end());

    Place train_place;
    train_place.id = place.id;
    train_place.label = place.label;
    train_place.archetype = place.archetype;
    train_place.images = Matrix(n - n_query, place.images.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = place.images.row(order[i]);
      if (i < n_query) {
        queries.emplace_back(row.begin(), row.end());
        out.eval.query_places.push_back(place.id);
      } else {
        std::copy(row.begin(), row.end(), train_place.images.row(i - n_query).begin());
        references.emplace_back(row.begin(), row.end());
        out.eval.reference_places.push_back(place.id);
      }
    }
    out.train.places.push_back(std::move(train_place));
  }
  out.eval.query_features = queries.empty() ? Matrix(0, static_cast<std::size_t>(ds.feature_dim))
                                            : Matrix::from_rows(queries);
  out.eval.reference_features = Matrix::from_rows(references);
  return out;
}

EvalSplit make_eval_split(const PlaceDataset& ds, double holdout_fraction, std::uint64_t seed) {
  return make_holdout_split(ds, holdout_fraction, seed).eval;
}

}  // namespace gpm
