#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/types.h>

#include "faceedit/classifier.hpp"
#include "faceedit/dataset.hpp"
#include "faceedit/generator.hpp"
#include "faceedit/train_config.hpp"

namespace faceedit {

class Trainer;

// Edits a batch: (images, source labels, target labels) -> edited images.
using Editor = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const torch::Tensor&)>;

// Gradient-free editing with the generator in inference mode.
Editor generator_editor(Generator generator);

inline constexpr const char* kClassifierCaveat =
    "scores come from this repository's own evaluation classifier; full-scale numbers are not directly "
    "comparable with results measured by a different pretrained classifier";

struct AccuracyReport {
  std::string model_id;
  AttributeNames names;
  std::vector<double> accuracy;      // per attribute, in [0,1]
  std::vector<std::int64_t> counts;  // edited images scored per attribute
  double average = 0.0;
  std::string caveat = kClassifierCaveat;
};

// Forced-flip protocol: for every attribute i, the first n test images get
// bit i flipped (other bits kept) and the edit is scored by whether the
// classifier reports the flipped value.
AccuracyReport eval_attribute_accuracy(const Editor& editor, const EvalClassifier& classifier, const Dataset& test,
                                       std::int64_t n_per_attribute, const std::string& model_id = "model",
                                       std::int64_t batch_size = 64);

// Flips bit `attribute` of every row.
torch::Tensor forced_flip(const torch::Tensor& labels, std::int64_t attribute);

nlohmann::json to_json(const AccuracyReport& r);
std::string to_csv(const AccuracyReport& r);

enum class AblationVariant { kFull, kNoCm, kNoCab };

AblationVariant parse_ablation_variant(const std::string& name);
std::string to_string(AblationVariant v);
TrainConfig apply_variant(TrainConfig config, AblationVariant v);

struct AblationTable {
  std::vector<std::pair<AblationVariant, AccuracyReport>> rows;
  // Variants ordered by average accuracy, e.g. "full > no_cm > no_cab".
  std::string ordering() const;
};

nlohmann::json to_json(const AblationTable& t);
std::string to_csv(const AblationTable& t);

struct AblationOptions {
  std::int64_t n_per_attribute = 256;
  // Called with each trained variant before it is scored.
  std::function<void(AblationVariant, Trainer&)> on_trained;
};

// Trains each variant from the same seed and data, then scores it.
AblationTable run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& variants, const Dataset& train,
                           const Dataset& test, const EvalClassifier& classifier, const AblationOptions& options = {});

}  // namespace faceedit
