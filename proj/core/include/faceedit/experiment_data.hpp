#pragma once

#include <cstdint>
#include <optional>

#include <torch/types.h>

#include "faceedit/dataset.hpp"
#include "faceedit/train_config.hpp"

namespace faceedit {

// Seed offsets that keep the synthetic splits disjoint draws.
inline constexpr std::uint64_t kSyntheticTestSeedOffset = 1000;
inline constexpr std::uint64_t kSyntheticClassifierSeedOffset = 2000;

struct ExperimentData {
  DatasetPtr train;
  DatasetPtr test;
  // Separate draw for the evaluation classifier on synthetic data; the
  // training split otherwise.
  DatasetPtr classifier_train;
  // k x R x R support masks, synthetic data only.
  std::optional<torch::Tensor> masks;
};

// config.dataset is either "synthetic" or a directory readable by
// open_dataset_dir.
ExperimentData load_experiment_data(const TrainConfig& config);

}  // namespace faceedit
