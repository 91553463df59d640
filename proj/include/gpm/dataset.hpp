#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpm/numerics.hpp"

namespace gpm {

using PlaceId = std::int64_t;

/// Synthetic place generator. Archetype centers lie on the unit sphere;
/// place centers scatter around their archetype with std archetype_spread;
/// images scatter around their place with std within_place_noise. On top of
/// the isotropic image noise, a fixed set of nuisance directions (shared by
/// the whole dataset) carries extra per-image noise of std
/// within_place_noise · nuisance_gain, so that raw feature distances are a
/// poor place signal until an encoder learns to suppress those directions.
/// With coarse_archetypes the archetype centers are drawn inside the nuisance
/// subspace, so only the place-level offsets separate places reliably.
struct GeneratorConfig {
  std::int64_t n_places = 2000;
  std::int64_t min_images = 6;
  std::int64_t max_images = 6;
  std::int64_t feature_dim = 32;
  std::int64_t n_archetypes = 50;
  double within_place_noise = 0.05;
  double archetype_spread = 0.08;
  std::int64_t nuisance_dims = 16;
  double nuisance_gain = 3.0;
  bool coarse_archetypes = true;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct Place {
  PlaceId id = 0;
  std::int64_t label = 0;
  std::int64_t archetype = -1;
  Matrix images;  // n_images × feature_dim

  friend bool operator==(const Place&, const Place&) = default;
};

struct PlaceDataset {
  GeneratorConfig meta;
  std::int64_t feature_dim = 0;
  std::vector<Place> places;

  std::size_t n_images() const;
  std::vector<PlaceId> place_ids() const;
  /// Index into places; throws if the id is unknown.
  std::size_t index_of(PlaceId id) const;
  /// Unique ids, ≥ 2 images per place, consistent dimensions, finite values.
  void validate() const;

  friend bool operator==(const PlaceDataset&, const PlaceDataset&) = default;
};

PlaceDataset generate(const GeneratorConfig& cfg);

/// Versioned binary format: magic, version, generator metadata, then each
/// place's id, label, archetype and row-major images.
void save(const PlaceDataset& ds, const std::string& path);
PlaceDataset load(const std::string& path);
void save(const PlaceDataset& ds, std::ostream& os);
PlaceDataset load(std::istream& is, const std::string& source = "<stream>");

/// One row per image: place_id,label,archetype,f0,...,f{D-1}.
void export_csv(const PlaceDataset& ds, std::ostream& os);

struct EvalSplit {
  Matrix query_features;
  std::vector<PlaceId> query_places;
  Matrix reference_features;
  std::vector<PlaceId> reference_places;
};

struct HoldoutSplit {
  EvalSplit eval;
  /// The reference images only, as a dataset for training.
  PlaceDataset train;
  /// Places that could not spare a query image.
  std::vector<PlaceId> skipped;
};

/// Per place, ⌊n·holdout_fraction⌋ randomly chosen images become queries
/// and the rest references. Places that would be left with fewer than two
/// reference images keep all their images as references.
HoldoutSplit make_holdout_split(const PlaceDataset& ds, double holdout_fraction, std::uint64_t seed);
EvalSplit make_eval_split(const PlaceDataset& ds, double holdout_fraction, std::uint64_t seed);

}  // namespace gpm
