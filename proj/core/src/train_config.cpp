#include "faceedit/train_config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <nlohmann/json.hpp>

#include "faceedit/errors.hpp"

namespace faceedit {

using nlohmann::json;

namespace {

struct Field {
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

template <typename T>
Field plain(T TrainConfig::*member) {
  return {[member](const TrainConfig& c) { return json(c.*member); },
          [member](TrainConfig& c, const json& j) { c.*member = j.get<T>(); }};
}

template <typename T>
Field weight(T LossWeights::*member) {
  return {[member](const TrainConfig& c) { return json(c.weights.*member); },
          [member](TrainConfig& c, const json& j) { c.weights.*member = j.get<T>(); }};
}

template <typename T>
Field ablation(T AblationFlags::*member) {
  return {[member](const TrainConfig& c) { return json(c.ablation.*member); },
          [member](TrainConfig& c, const json& j) { c.ablation.*member = j.get<T>(); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f{
      {"epochs", plain(&TrainConfig::epochs)},
      {"batch_size", plain(&TrainConfig::batch_size)},
      {"lr_initial", plain(&TrainConfig::lr_initial)},
      {"lr_decayed", plain(&TrainConfig::lr_decayed)},
      {"lr_decay_epoch", plain(&TrainConfig::lr_decay_epoch)},
      {"beta1", plain(&TrainConfig::beta1)},
      {"beta2", plain(&TrainConfig::beta2)},
      {"d_steps_per_g", plain(&TrainConfig::d_steps_per_g)},
      {"lambda_att", weight(&LossWeights::attention)},
      {"lambda_dcls", weight(&LossWeights::d_classification)},
      {"lambda_cm", weight(&LossWeights::matching)},
      {"lambda_gcls", weight(&LossWeights::g_classification)},
      {"lambda_rec", weight(&LossWeights::reconstruction)},
      {"lambda_gp", weight(&LossWeights::gradient_penalty)},
      {"no_cm", ablation(&AblationFlags::no_cm)},
      {"no_cab", ablation(&AblationFlags::no_cab)},
      {"seed", plain(&TrainConfig::seed)},
      {"dataset", plain(&TrainConfig::dataset)},
      {"resolution", plain(&TrainConfig::resolution)},
      {"attributes", plain(&TrainConfig::attributes)},
      {"target_policy",
       {[](const TrainConfig& c) { return json(to_string(c.target_policy)); },
        [](TrainConfig& c, const json& j) { c.target_policy = parse_target_policy(j.get<std::string>()); }}},
      {"flip_probability", plain(&TrainConfig::flip_probability)},
      {"g_levels", plain(&TrainConfig::g_levels)},
      {"g_base_width", plain(&TrainConfig::g_base_width)},
      {"g_max_width", plain(&TrainConfig::g_max_width)},
      {"g_skip_mode",
       {[](const TrainConfig& c) { return json(to_string(c.g_skip_mode)); },
        [](TrainConfig& c, const json& j) { c.g_skip_mode = parse_skip_mode(j.get<std::string>()); }}},
      {"g_skip_levels", plain(&TrainConfig::g_skip_levels)},
      {"d_base_width", plain(&TrainConfig::d_base_width)},
      {"d_max_width", plain(&TrainConfig::d_max_width)},
      {"d_blocks", plain(&TrainConfig::d_blocks)},
      {"d_tap_blocks", plain(&TrainConfig::d_tap_blocks)},
      {"d_norm",
       {[](const TrainConfig& c) { return json(to_string(c.d_norm)); },
        [](TrainConfig& c, const json& j) { c.d_norm = parse_norm_kind(j.get<std::string>()); }}},
      {"synthetic_count", plain(&TrainConfig::synthetic_count)},
      {"synthetic_test_count", plain(&TrainConfig::synthetic_test_count)},
      {"synthetic_seed", plain(&TrainConfig::synthetic_seed)},
      {"checkpoint_dir", plain(&TrainConfig::checkpoint_dir)},
      {"metric_log", plain(&TrainConfig::metric_log)},
      {"eval_classifier", plain(&TrainConfig::eval_classifier)},
      {"holdout", plain(&TrainConfig::holdout)},
  };
  return f;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (d_steps_per_g < 1) throw ConfigError("d_steps_per_g must be positive");
  if (!(lr_initial > 0.0) || !(lr_decayed > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_decayed > lr_initial) throw ConfigError("learning-rate schedule must be non-increasing");
  if (lr_decay_epoch < 0) throw ConfigError("lr_decay_epoch must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must lie in [0,1)");
  if (attributes.empty()) throw ConfigError("attribute list must not be empty");
  weights.validate();
  generator_config().validate();
  discriminator_config().validate();
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g;
  g.resolution = resolution;
  g.attributes = static_cast<std::int64_t>(attributes.size());
  g.levels = g_levels;
  g.base_width = g_base_width;
  g.max_width = g_max_width;
  g.skip_mode = g_skip_mode;
  g.skip_levels = g_skip_levels;
  return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  DiscriminatorConfig d;
  d.resolution = resolution;
  d.attributes = static_cast<std::int64_t>(attributes.size());
  d.base_width = d_base_width;
  d.max_width = d_max_width;
  d.blocks = d_blocks;
  d.tap_blocks = d_tap_blocks;
  d.norm = d_norm;
  d.complementary = !ablation.no_cab;
  return d;
}

double TrainConfig::learning_rate(std::int64_t epoch) const {
  return epoch <= lr_decay_epoch ? lr_initial : lr_decayed;
}

LossWeights TrainConfig::effective_weights() const {
  auto w = weights;
  if (ablation.no_cm || ablation.no_cab) w.matching = 0.0;
  return w;
}

json to_json(const TrainConfig& config) {
  json j = json::object();
  for (const auto& [key, field] : fields()) j[key] = field.get(config);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a flat key-value object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second.set(c, value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid: " + e.what());
  }
  return train_config_from_json(j);
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_json(config).dump(2) << '\n';
}

TrainConfig synthetic_train_config() {
  TrainConfig c;
  c.dataset = "synthetic";
  c.resolution = 32;
  c.attributes = {"Hat_Band", "Chin_Patch", "Bright_Skin"};
  c.epochs = 200;
  c.batch_size = 32;
  c.g_levels = 3;
  c.g_base_width = 16;
  c.d_base_width = 16;
  c.d_blocks = 4;
  c.d_tap_blocks = 2;
  c.d_norm = NormKind::kNone;
  c.d_steps_per_g = 1;
  c.seed = 7;
  return c;
}

}  // namespace faceedit
