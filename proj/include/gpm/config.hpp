#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gpm/dataset.hpp"
#include "gpm/losses.hpp"
#include "gpm/model.hpp"
#include "gpm/numerics.hpp"
#include "gpm/sampler.hpp"

namespace gpm {

struct TrainConfig {
  int epochs = 15;
  /// Steps per row of fractions.csv.
  int log_interval = 25;
  /// Evaluate recall every N epochs (0: only after the last epoch).
  int eval_every = 1;
  double holdout_fraction = 0.2;
  /// Weight of the loss evaluated on the proxy-head outputs.
  double proxy_loss_weight = 1.0;
  std::uint64_t split_seed = 3;
  /// Load the dataset from this file instead of generating it.
  std::string dataset_path;
  bool dump_plans = false;
  bool save_checkpoints = true;

  void validate() const;
};

/// Every knob of a run, addressable through flat dotted keys such as
/// `sampler.M=60` or `loss.kind=triplet`.
struct RunConfig {
  GeneratorConfig data;
  EncoderConfig model;
  LossConfig loss;
  SamplerConfig sampler;
  SgdConfig sgd;
  TrainConfig train;
  std::uint64_t seed = 0;

  RunConfig() { set_seed(0); }

  /// Named preset: "desk" (default sizes for seconds-scale runs) or "paper"
  /// (reference hyper-parameters at full mini-batch and proxy size).
  static RunConfig preset(std::string_view name);

  /// Sets the master seed and derives every component seed from it.
  void set_seed(std::uint64_t s);

  void set(std::string_view key, std::string_view value);
  /// Parses `key=value`.
  void apply(std::string_view assignment);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// `key=value` lines; blank lines and lines starting with '#' are ignored.
  void load(std::istream& is, const std::string& source = "<config>");
  void load_file(const std::string& path);
  void save(std::ostream& os) const;
  void save_file(const std::string& path) const;

  void validate() const;
};

}  // namespace gpm
