#include "gpm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

struct KeyBinding {
  std::string key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GPM_NUMBER_KEY(name, member)                                                       \
  KeyBinding {                                                                             \
    name,                                                                                  \
        [](RunConfig& c, std::string_view k, std::string_view v) {                         \
          c.member = parse_number<std::decay_t<decltype(c.member)>>(k, v);                 \
        },                                                                                 \
        [](const RunConfig& c) { return format_number(c.member); }                         \
  }

#define GPM_BOOL_KEY(name, member)                                                                   \
  KeyBinding {                                                                                       \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                  \
  }

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = {
      {"seed", [](RunConfig& c, std::string_view k, std::string_view v) {
         c.set_seed(parse_number<std::uint64_t>(k, v));
       },
       [](const RunConfig& c) { return format_number(c.seed); }},

      GPM_NUMBER_KEY("data.n_places", data.n_places),
      GPM_NUMBER_KEY("data.min_images", data.min_images),
      GPM_NUMBER_KEY("data.max_images", data.max_images),
      GPM_NUMBER_KEY("data.feature_dim", data.feature_dim),
      GPM_NUMBER_KEY("data.n_archetypes", data.n_archetypes),
      GPM_NUMBER_KEY("data.within_place_noise", data.within_place_noise),
      GPM_NUMBER_KEY("data.archetype_spread", data.archetype_spread),
      GPM_NUMBER_KEY("data.nuisance_dims", data.nuisance_dims),
      GPM_NUMBER_KEY("data.nuisance_gain", data.nuisance_gain),
      GPM_BOOL_KEY("data.coarse_archetypes", data.coarse_archetypes),
      GPM_NUMBER_KEY("data.seed", data.seed),
      {"data.path", [](RunConfig& c, std::string_view, std::string_view v) { c.train.dataset_path = v; },
       [](const RunConfig& c) { return c.train.dataset_path; }},

      GPM_NUMBER_KEY("model.input_dim", model.input_dim),
      GPM_NUMBER_KEY("model.hidden_dim", model.hidden_dim),
      GPM_NUMBER_KEY("model.embed_dim", model.embed_dim),
      GPM_NUMBER_KEY("model.proxy_dim", model.proxy_dim),
      GPM_NUMBER_KEY("model.seed", model.seed),
      GPM_BOOL_KEY("model.detach_proxy_input", model.detach_proxy_input),

      {"loss.kind", [](RunConfig& c, std::string_view, std::string_view v) { c.loss.kind = parse_loss_kind(v); },
       [](const RunConfig& c) { return std::string(to_string(c.loss.kind)); }},
      GPM_NUMBER_KEY("loss.triplet_margin", loss.triplet_margin),
      GPM_NUMBER_KEY("loss.contrastive_pos_margin", loss.contrastive_pos_margin),
      GPM_NUMBER_KEY("loss.contrastive_neg_margin", loss.contrastive_neg_margin),
      GPM_NUMBER_KEY("loss.ms_alpha", loss.ms_alpha),
      GPM_NUMBER_KEY("loss.ms_beta", loss.ms_beta),
      GPM_NUMBER_KEY("loss.ms_lambda", loss.ms_lambda),
      GPM_NUMBER_KEY("loss.ms_epsilon", loss.ms_epsilon),
      GPM_BOOL_KEY("loss.ohm", loss.ohm_enabled),

      GPM_NUMBER_KEY("sampler.M", sampler.places_per_batch),
      GPM_NUMBER_KEY("sampler.K", sampler.images_per_place),
      {"sampler.mode", [](RunConfig& c, std::string_view, std::string_view v) { c.sampler.mode = parse_sampling_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.sampler.mode)); }},
      GPM_NUMBER_KEY("sampler.seed", sampler.seed),

      GPM_NUMBER_KEY("sgd.lr", sgd.learning_rate),
      GPM_NUMBER_KEY("sgd.momentum", sgd.momentum),
      GPM_NUMBER_KEY("sgd.weight_decay", sgd.weight_decay),
      GPM_NUMBER_KEY("sgd.lr_decay_factor", sgd.lr_decay_factor),
      GPM_NUMBER_KEY("sgd.lr_decay_every", sgd.lr_decay_every_epochs),

      GPM_NUMBER_KEY("train.epochs", train.epochs),
      GPM_NUMBER_KEY("train.log_interval", train.log_interval),
      GPM_NUMBER_KEY("train.eval_every", train.eval_every),
      GPM_NUMBER_KEY("train.holdout_fraction", train.holdout_fraction),
      GPM_NUMBER_KEY("train.proxy_loss_weight", train.proxy_loss_weight),
      GPM_NUMBER_KEY("train.split_seed", train.split_seed),
      GPM_BOOL_KEY("train.dump_plans", train.dump_plans),
      GPM_BOOL_KEY("train.save_checkpoints", train.save_checkpoints),
  };
  return table;
}

#undef GPM_NUMBER_KEY
#undef GPM_BOOL_KEY

const KeyBinding& binding(std::string_view key) {
  for (const KeyBinding& b : bindings())
    if (b.key == key) return b;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (log_interval < 1) throw ConfigError("train.log_interval must be >= 1");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("train.holdout_fraction must be in [0,1)");
  }
  if (!(proxy_loss_weight >= 0.0)) throw ConfigError("train.proxy_loss_weight must be >= 0");
}

RunConfig RunConfig::preset(std::string_view name) {
  RunConfig c;
  c.set_seed(0);
  if (name == "desk") {
    c.sgd.learning_rate = 0.01;
    return c;
  }
  if (name == "paper") {
    c.sampler.places_per_batch = 60;
    c.sampler.images_per_place = 4;
    c.model.hidden_dim = 256;
    c.model.embed_dim = 256;
    c.model.proxy_dim = 128;
    c.sgd.learning_rate = 0.05;
    c.sgd.momentum = 0.95;
    c.sgd.weight_decay = 1e-4;
    c.sgd.lr_decay_factor = 0.3;
    c.sgd.lr_decay_every_epochs = 5;
    c.train.epochs = 30;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk|paper)");
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  data.seed = s;
  model.seed = s + 1;
  sampler.seed = s + 2;
  train.split_seed = s + 3;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  binding(trim(key)).set(*this, trim(key), trim(value));
}

void RunConfig::apply(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string RunConfig::get(std::string_view key) const { return binding(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const KeyBinding& b : bindings()) out.push_back(b.key);
    return out;
  }();
  return names;
}

void RunConfig::load(std::istream& is, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    try {
      apply(text);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  load(is, path);
}

void RunConfig::save(std::ostream& os) const {
  for (const KeyBinding& b : bindings()) os << b.key << '=' << b.get(*this) << '\n';
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write config snapshot: " + path);
  save(os);
}

void RunConfig::validate() const {
  if (train.dataset_path.empty()) data.validate();
  model.validate();
  loss.validate();
  sampler.validate();
  sgd.validate();
  train.validate();
}

}  // namespace gpm
