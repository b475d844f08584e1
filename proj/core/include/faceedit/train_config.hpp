#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "faceedit/attributes.hpp"
#include "faceedit/discriminator.hpp"
#include "faceedit/generator.hpp"
#include "faceedit/losses.hpp"
#include "faceedit/sampling.hpp"

namespace faceedit {

struct AblationFlags {
  bool no_cm = false;   // drop the complementary matching term
  bool no_cab = false;  // drop the complementary branch and everything fed by it

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainConfig {
  std::int64_t epochs = 200;
  std::int64_t batch_size = 32;
  double lr_initial = 2e-4;
  double lr_decayed = 1e-4;
  std::int64_t lr_decay_epoch = 100;  // epochs 1..lr_decay_epoch use lr_initial
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::int64_t d_steps_per_g = 5;
  LossWeights weights;
  AblationFlags ablation;
  std::uint64_t seed = 1;
  std::string dataset = "synthetic";
  std::int64_t resolution = 128;
  AttributeNames attributes = default_attributes();
  TargetPolicy target_policy = TargetPolicy::kShuffleBatchLabels;
  double flip_probability = 0.5;

  // Architecture.
  std::int64_t g_levels = 5;
  std::int64_t g_base_width = 32;
  std::int64_t g_max_width = 1024;
  SkipMode g_skip_mode = SkipMode::kGated;
  std::int64_t g_skip_levels = -1;
  std::int64_t d_base_width = 32;
  std::int64_t d_max_width = 1024;
  std::int64_t d_blocks = 5;
  std::int64_t d_tap_blocks = 3;
  NormKind d_norm = NormKind::kInstance;

  // Synthetic dataset (used when dataset == "synthetic").
  std::int64_t synthetic_count = 256;
  std::int64_t synthetic_test_count = 256;
  std::uint64_t synthetic_seed = 7;

  // Persistence; empty checkpoint_dir disables periodic checkpoints.
  std::string checkpoint_dir;
  std::string metric_log;
  std::string eval_classifier;
  std::int64_t holdout = 2000;

  void validate() const;
  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
  double learning_rate(std::int64_t epoch) const;  // epoch is 1-based
  LossWeights effective_weights() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& config);
// Every key is optional; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const std::filesystem::path& path, const TrainConfig& config);

// Desk-scale defaults: 32x32 synthetic faces with three attributes.
TrainConfig synthetic_train_config();

}  // namespace faceedit
